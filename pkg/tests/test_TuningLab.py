#!/usr/bin/env python

import os

import numpy as np
import pandas as pd
import pytest

from quadtune.quadtune import ConfigError
from quadtune.models.DenseNet import PolicyFile
from quadtune.labs.SimTrace import COLUMNS, SimTrace
from quadtune.labs.TuningLab import (RunConfig, TuningLab, __version__,
                                     cli)
import quadtune.labs.TuningLab as TuningLabModule


DEFAULT_CONF = os.path.join(os.path.dirname(__file__), '..', 'configs',
                            'default.conf')

SHORT_CONF = """
[trajectory]
t_takeoff = 1
t_hover1 = 0.5
t_circle = 2
t_hover2 = 0.5
t_land = 1
altitude = 1
radius = 0.2

[agent]
hidden_units = 8
batch = 50
buffer = 1000
max_episodes = 1
eval_interval = 1
target_return = 1e9
"""


@pytest.fixture
def short_conf(tmp_path, monkeypatch):
    monkeypatch.setenv('QUADTUNE_ROOT', str(tmp_path / 'labs'))
    path = tmp_path / 'short.conf'
    path.write_text(SHORT_CONF)
    return str(path)


def test_default_config():
    c = RunConfig()
    assert c.get('sim', 'dt_ctrl') == 0.005
    assert c.get('agent', 'target_return') == 117.0
    assert c.get('gains', 'kD_phitheta') == 0.81905
    assert c.params().I[2, 2] == 0.0234
    assert c.gains().inner.kP2_psi == 5.4801
    assert not c.disturbance().enabled

    assert RunConfig.load(DEFAULT_CONF).conf == c.conf


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig({'agent': {'no_such_key': 1}})
    with pytest.raises(ConfigError):
        RunConfig({'nosection': {'a': 1}})
    with pytest.raises(ConfigError):
        RunConfig({'agent': {'batch': 'many'}})
    with pytest.raises(ConfigError):
        RunConfig({'sim': {'dt_ctrl': 0.0045}})
    with pytest.raises(ConfigError):
        RunConfig({'agent': {'dt_agent': 0.051}})
    with pytest.raises(ConfigError):
        RunConfig({'trajectory': {'t_circle': 0}})
    with pytest.raises(ConfigError):
        RunConfig.load(str(tmp_path / 'missing.conf'))


def test_config_round_trip(tmp_path):
    c = RunConfig({'disturbance': {'enabled': 'yes', 'force_x': '0.5'},
                   'trajectory': {'yaw_mode': 'tangent'},
                   'sim': {'seed': '42'}})
    assert c.get('disturbance', 'enabled') is True
    assert c.get('sim', 'seed') == 42
    np.testing.assert_array_equal(c.disturbance().force, [0.5, 0, 0])

    path = c.write(str(tmp_path / 'run.conf'))
    assert RunConfig.load(path).conf == c.conf


def test_lab_simulate(short_conf, tmp_path):
    tl = TuningLab(RunConfig.load(short_conf))
    trace = tl.simulate()
    assert len(trace) == 1001
    assert tl.lab.root_path.startswith(os.environ['QUADTUNE_ROOT'])

    zero = PolicyFile.load(_zero_policy(tmp_path))
    manual, tuned, cmp = tl.evaluate(zero)
    assert manual.frame().equals(tuned.frame())
    assert cmp.improvement_pct['rmse_eta'] == 0.0


def test_lab_train_checkpoint(short_conf):
    tl = TuningLab(RunConfig.load(short_conf))
    result = tl.train(seed=1)

    policy = result.agent.mkpath('best_policy.json')
    assert policy.startswith(tl.lab.instance_path())
    assert policy.startswith(os.environ['QUADTUNE_ROOT'])
    np.testing.assert_array_equal(PolicyFile.load(policy).to_net().vector(),
                                  result.best_actor.vector())
    curve = pd.read_csv(result.agent.mkpath('curve.csv'))
    assert list(curve['episode']) == [0]


def _zero_policy(tmp_path):
    path = str(tmp_path / 'zero.json')
    assert cli(['export-policy', '--zero', '--out', path]) == 0
    return path


def test_cli_version(capsys):
    assert cli(['--version']) == 0
    assert capsys.readouterr().out.strip() == 'quadtune %s' % __version__


def test_cli_usage(capsys):
    assert cli([]) == 1
    assert cli(['fly']) == 1
    assert cli(['simulate']) == 1
    assert cli(['--help']) == 0
    out = capsys.readouterr().out
    assert 'simulate' in out and 'reconstruct-check' in out


def test_cli_missing_config(tmp_path, capsys):
    missing = str(tmp_path / 'nope.conf')
    assert cli(['simulate', '--config', missing, '--out',
                str(tmp_path / 't.csv')]) == 2
    assert missing in capsys.readouterr().err


def test_cli_simulate(short_conf, tmp_path, capsys):
    a = str(tmp_path / 'a.csv')
    b = str(tmp_path / 'b.csv')
    assert cli(['simulate', '--config', short_conf, '--out', a]) == 0
    assert cli(['simulate', '--config', short_conf, '--out', b]) == 0
    assert '|e_eta|_RMSE' in capsys.readouterr().out
    with open(a, 'rb') as fa, open(b, 'rb') as fb:
        assert fa.read() == fb.read()
    assert os.path.exists(a + '.conf')
    assert RunConfig.load(a + '.conf').conf == \
        RunConfig.load(short_conf).conf

    df = pd.read_csv(a, comment='#')
    assert list(df.columns) == COLUMNS
    assert len(df) == 1001

    assert cli(['simulate', '--config', short_conf, '--gains', 'auto',
                '--out', a]) == 1


def test_cli_zero_policy(short_conf, tmp_path, capsys):
    policy = str(tmp_path / 'zero.npz')
    manual = str(tmp_path / 'manual.csv')
    tuned = str(tmp_path / 'tuned.csv')
    assert cli(['export-policy', '--zero', '--config', short_conf,
                '--out', policy]) == 0
    assert cli(['simulate', '--config', short_conf, '--out', manual]) == 0
    assert cli(['simulate', '--config', short_conf, '--gains', 'policy',
                policy, '--out', tuned]) == 0
    with open(manual, 'rb') as fa, open(tuned, 'rb') as fb:
        assert fa.read() == fb.read()

    capsys.readouterr()
    assert cli(['compare', manual, tuned]) == 0
    out = capsys.readouterr().out
    assert 'Manually tuned' in out and 'RL fine-tuned' in out
    assert '0.0%' in out

    assert cli(['evaluate', '--config', short_conf, '--policy', policy,
                '--out-prefix', str(tmp_path / 'eval')]) == 0
    assert 'Improvement' in capsys.readouterr().out
    assert os.path.exists(str(tmp_path / 'eval_manual.csv'))
    assert os.path.exists(str(tmp_path / 'eval_policy.csv'))


def test_cli_export_and_reconstruct(tmp_path, capsys):
    src = str(tmp_path / 'actor.json')
    dst = str(tmp_path / 'actor.npz')
    assert cli(['export-policy', '--seed', '3', '--out', src]) == 0
    assert cli(['export-policy', '--policy', src, '--out', dst]) == 0
    a, b = PolicyFile.load(src), PolicyFile.load(dst)
    for (Wa, ba, _), (Wb, bb, _) in zip(a.matrices(), b.matrices()):
        assert np.array_equal(Wa, Wb) and np.array_equal(ba, bb)
    assert (b.N, b.Q) == (1.0, -1.0)

    capsys.readouterr()
    assert cli(['reconstruct-check', '--policy', dst,
                '--trials', '1000']) == 0
    assert 'max deviation 0.0' in capsys.readouterr().out

    assert cli(['export-policy', '--out', dst]) == 1
    assert cli(['export-policy', '--zero', '--seed', '1',
                '--out', dst]) == 1
    assert cli(['export-policy', '--zero',
                '--out', str(tmp_path / 'x.txt')]) == 2
    assert cli(['reconstruct-check', '--policy',
                str(tmp_path / 'none.json')]) == 2


def test_cli_train(short_conf, tmp_path, capsys):
    policy = str(tmp_path / 'trained.json')
    curve = str(tmp_path / 'curve.csv')
    assert cli(['train', '--config', short_conf, '--seed', '1',
                '--episodes', '2', '--out-policy', policy,
                '--curve', curve]) == 0
    assert 'Trained 2 episodes' in capsys.readouterr().out

    df = pd.read_csv(curve)
    assert len(df) == 2
    assert list(df['episode']) == [0, 1]
    p = PolicyFile.load(policy)
    assert (p.obs_dim, p.act_dim) == (12, 5)
    assert len(p.layers) == 3
    assert os.path.exists(policy + '.conf')

    curve2 = str(tmp_path / 'curve2.csv')
    assert cli(['train', '--config', short_conf, '--seed', '1',
                '--episodes', '2', '--out-policy',
                str(tmp_path / 'trained2.json'), '--curve', curve2]) == 0
    with open(curve, 'rb') as fa, open(curve2, 'rb') as fb:
        assert fa.read() == fb.read()


def test_cli_simulate_fault(short_conf, tmp_path, monkeypatch, capsys):
    def faulted(self, gain_source=None):
        trace = SimTrace(fault='SingularAttitude: pitch at +-pi/2')
        trace.record([0.0] * len(COLUMNS))
        return trace

    monkeypatch.setattr(TuningLabModule.TuningLab, 'simulate', faulted)
    out = str(tmp_path / 'fault.csv')
    assert cli(['simulate', '--config', short_conf, '--out', out]) == 3
    assert 'SingularAttitude' in capsys.readouterr().err
    assert SimTrace.read_csv(out).fault.startswith('SingularAttitude')
