#!/usr/bin/env python
#

# Copyright (c) 2024, The quadtune authors
# All rights reserved.
#
# Redistribution and use in source and binary forms, with or without
# modification, are permitted provided that the following conditions are met:
#
# * Redistributions of source code must retain the above copyright notice, this
#   list of conditions and the following disclaimer.
#
# * Redistributions in binary form must reproduce the above copyright notice,
#   this list of conditions and the following disclaimer in the documentation
#   and/or other materials provided with the distribution.
#
# THIS SOFTWARE IS PROVIDED BY THE COPYRIGHT HOLDERS AND CONTRIBUTORS "AS IS"
# AND ANY EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT LIMITED TO, THE
# IMPLIED WARRANTIES OF MERCHANTABILITY AND FITNESS FOR A PARTICULAR PURPOSE
# ARE DISCLAIMED.
# IN NO EVENT SHALL THE COPYRIGHT HOLDER OR CONTRIBUTORS BE LIABLE
# FOR ANY DIRECT, INDIRECT, INCIDENTAL, SPECIAL, EXEMPLARY, OR CONSEQUENTIAL
# DAMAGES (INCLUDING, BUT NOT LIMITED TO, PROCUREMENT OF SUBSTITUTE GOODS OR
# SERVICES; LOSS OF USE, DATA, OR PROFITS; OR BUSINESS INTERRUPTION) HOWEVER
# CAUSED AND ON ANY THEORY OF LIABILITY, WHETHER IN CONTRACT, STRICT LIABILITY,
# OR TORT (INCLUDING NEGLIGENCE OR OTHERWISE) ARISING IN ANY WAY OUT OF THE USE
# OF THIS SOFTWARE, EVEN IF ADVISED OF THE POSSIBILITY OF SUCH DAMAGE.


"""
Experiment driver: run configuration, the TuningLab that wires plant,
controller, environment and agent together, and the command line.

    python3 -m quadtune.labs.TuningLab --help
"""

from quadtune.quadtune import (ConfigError, Lab, QuadtuneError)
from quadtune.models.QuadrotorModel import (DisturbanceConfig,
                                            QuadrotorParams)
from quadtune.models.CascadedController import (GainSet, InnerGains,
                                                OuterGains)
from quadtune.models.MissionTrajectory import TrajectoryConfig
from quadtune.models.DdpgAgent import AgentConfig, DdpgAgent, make_actor
from quadtune.models.DenseNet import (DenseNet, DenseLayer, PolicyFile,
                                      export_policy, reconstruct_action)
from quadtune.models.TuningEnv import (ExportedPolicy, TuningEnv, ZeroPolicy,
                                       run_episode, step_ratio, train)
from quadtune.labs.SimTrace import (SimTrace, compare, format_comparison,
                                    metrics)

import os
import sys
import argparse
import configparser
from copy import deepcopy
from dataclasses import MISSING, fields

import numpy as np

__version__ = '0.1.0'


def _defaults(cls):
    return {f.name: f.default for f in fields(cls)
            if f.default is not MISSING}


class RunConfig (object):
    # Sections and defaults of a run configuration file.
    default_conf = {
        'quadrotor': {'m_tot': 1.2, 'g': 9.81, 'l': 0.225,
                      'Ixx': 0.0131, 'Iyy': 0.0131, 'Izz': 0.0234,
                      'T_max': 8.43, 'drag_ratio': 0.0237},
        'gains': dict(_defaults(OuterGains), **_defaults(InnerGains)),
        'trajectory': _defaults(TrajectoryConfig),
        'agent': _defaults(AgentConfig),
        'sim': {'dt_physics': 1e-3, 'dt_ctrl': 0.005, 'seed': 0,
                'tau_filter': 0.02, 'tilt_limit': 0.5, 'tilt_guard': 0.1},
        'disturbance': {'enabled': False,
                        'force_x': 0.0, 'force_y': 0.0, 'force_z': 0.0,
                        'moment_x': 0.0, 'moment_y': 0.0, 'moment_z': 0.0,
                        'gust_amplitude': 0.0, 'gust_period': 5.0,
                        'gust_direction': 0.0},
        'output': {'name': 'TuningLab', 'root': 'tmp-quadtune',
                   'debug': False},
    }

    def __init__(self, conf=None):
        """
        @param conf  {section: {key: value}} overriding default_conf.
                     None values are ignored.
        """
        super(RunConfig, self).__init__()
        self.conf = deepcopy(self.default_conf)
        for section, values in (conf or {}).items():
            for key, val in values.items():
                if val is not None:
                    self.set(section, key, val)
        self.validate()

    def set(self, section, key, value):
        """ Set a value, coerced to the type of its default """
        if section not in self.conf:
            raise ConfigError('Unknown config section [%s]' % section)
        if key not in self.conf[section]:
            raise ConfigError('Unknown config key %s in [%s]' %
                              (key, section))
        self.conf[section][key] = self._coerce(
            self.default_conf[section][key], value, '%s.%s' % (section, key))

    @staticmethod
    def _coerce(default, value, what):
        try:
            if isinstance(default, bool):
                if isinstance(value, bool):
                    return value
                v = str(value).strip().lower()
                if v in ('1', 'true', 'yes', 'on'):
                    return True
                if v in ('0', 'false', 'no', 'off'):
                    return False
                raise ValueError(value)
            if isinstance(default, int):
                return int(value)
            if isinstance(default, float):
                return float(value)
            return str(value).strip()
        except ValueError:
            raise ConfigError('Invalid value %r for %s' % (value, what))

    def get(self, section, key):
        return self.conf[section][key]

    @classmethod
    def load(cls, path):
        """ Read a run configuration file (INI sections of key = value) """
        if not os.path.isfile(path):
            raise ConfigError('Config file %s not found' % path)
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read(path)
        except configparser.Error as e:
            raise ConfigError('%s: %s' % (path, e))
        return cls({s: dict(parser.items(s)) for s in parser.sections()})

    def write(self, path):
        """ Write the resolved configuration in the load() format """
        with open(path, 'w') as f:
            for section, values in self.conf.items():
                f.write('[%s]\n' % section)
                for key, val in values.items():
                    f.write('%s = %s\n' % (key, repr(val)
                                           if isinstance(val, float)
                                           else val))
                f.write('\n')
        return path

    def validate(self):
        self.params()
        self.gains()
        self.trajectory()
        self.disturbance()
        agent = self.agent()
        sim = self.conf['sim']
        if not 0 < sim['dt_physics'] <= 0.01:
            raise ConfigError('sim.dt_physics must be in (0, 0.01]')
        step_ratio(sim['dt_ctrl'], sim['dt_physics'], 'sim.dt_ctrl')
        step_ratio(agent.dt_agent, sim['dt_ctrl'], 'agent.dt_agent')

    def params(self):
        q = dict(self.conf['quadrotor'])
        return QuadrotorParams.from_diagonal(q.pop('Ixx'), q.pop('Iyy'),
                                             q.pop('Izz'), **q)

    def gains(self):
        g = self.conf['gains']
        return GainSet(
            outer=OuterGains(**{f.name: g[f.name]
                                for f in fields(OuterGains)}),
            inner=InnerGains(**{f.name: g[f.name]
                                for f in fields(InnerGains)}))

    def trajectory(self):
        return TrajectoryConfig(**self.conf['trajectory'])

    def agent(self):
        return AgentConfig(**self.conf['agent'])

    def disturbance(self):
        d = self.conf['disturbance']
        return DisturbanceConfig(
            enabled=d['enabled'],
            force=[d['force_x'], d['force_y'], d['force_z']],
            moment=[d['moment_x'], d['moment_y'], d['moment_z']],
            gust_amplitude=d['gust_amplitude'],
            gust_period=d['gust_period'],
            gust_direction=d['gust_direction'])

    def env_conf(self):
        return {k: self.conf['sim'][k] for k in
                ('dt_physics', 'dt_ctrl', 'tau_filter', 'tilt_limit',
                 'tilt_guard')}


class TuningLab (object):
    def __init__(self, config=None, debug=None):
        """
        @param config  RunConfig (default: built-in defaults)
        @param debug   Override output.debug
        """
        super(TuningLab, self).__init__()
        self.config = config if config is not None else RunConfig()
        if debug is None:
            debug = self.config.get('output', 'debug')
        self.lab = Lab(self.config.get('output', 'name'),
                       os.environ.get('QUADTUNE_ROOT',
                                      self.config.get('output', 'root')),
                       debug=bool(debug))
        self._env = None

    @property
    def env(self):
        if self._env is None:
            c = self.config
            self._env = TuningEnv(self.lab, params=c.params(),
                                  gains=c.gains(), trajectory=c.trajectory(),
                                  agent_config=c.agent(),
                                  disturbance=c.disturbance(),
                                  conf=c.env_conf())
        return self._env

    def make_agent(self, seed=None):
        if seed is None:
            seed = self.config.get('sim', 'seed')
        return DdpgAgent(self.lab, self.config.agent(), conf={'seed': seed})

    def simulate(self, gain_source=None):
        """
        Fly the mission once.

        @param gain_source  None or 'manual' for the configured gains, a
                            PolicyFile, or anything with act(obs, explore)
        @returns SimTrace
        """
        if gain_source is None or gain_source == 'manual':
            policy = ZeroPolicy()
        elif isinstance(gain_source, PolicyFile):
            policy = ExportedPolicy(gain_source)
        else:
            policy = gain_source
        log = run_episode(self.env, policy, explore=False)
        self.lab.dbg('Mission flown: return %.1f in %d agent steps' %
                     (log.episode_return, log.steps))
        return log.trace

    def train(self, seed=None):
        if seed is None:
            seed = self.config.get('sim', 'seed')
        agent = self.make_agent(seed)
        self.lab.log('Training: up to %d episodes, target average return '
                     '%.1f' % (agent.config.max_episodes,
                               agent.config.target_return))
        result = train(self.env, agent, seed=seed)
        self.checkpoint(agent, result)
        return result

    def checkpoint(self, agent, result):
        """
        Keep the best actor and the learning curve of a training run in
        the agent's directory under the lab instance.

        @returns (policy path, curve path)
        """
        policy = agent.create_file(
            'best_policy.json',
            data=export_policy(result.best_actor).to_json())
        curve = agent.create_file(
            'curve.csv',
            data=result.curve.to_csv(index=False, lineterminator='\n'))
        self.lab.log('Checkpoint written to %s' % os.path.dirname(policy))
        return policy, curve

    def evaluate(self, policy):
        """
        Fly the configured gains and @param policy on the same mission.
        @returns (manual trace, policy trace, Comparison)
        """
        manual = self.simulate('manual')
        tuned = self.simulate(policy)
        return manual, tuned, compare(manual, tuned)


class _UsageError (Exception):
    pass


class UsageParser (argparse.ArgumentParser):
    """ Usage errors exit with status 1 """

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, '%s: error: %s\n' % (self.prog, message))


def _load_config(args):
    if args.config is None:
        return RunConfig()
    return RunConfig.load(args.config)


def _print_metrics(m, out=None):
    if out is None:
        out = sys.stdout
    print('|e_eta|_RMSE %.6f rad, peak %.6f rad at t=%.3fs, '
          '|e_p|_RMSE %.4f m, return %.1f' %
          (m.rmse_eta, m.peak_eta, m.peak_time, m.rmse_pos,
           m.episode_return), file=out)


def cmd_simulate(args):
    config = _load_config(args)
    tl = TuningLab(config, debug=args.debug or None)
    if args.gains == ['manual']:
        source = 'manual'
    elif len(args.gains) == 2 and args.gains[0] == 'policy':
        source = PolicyFile.load(args.gains[1])
    else:
        raise _UsageError('--gains expects "manual" or "policy <file>"')
    trace = tl.simulate(source)
    trace.write_csv(args.out)
    config.write(args.out + '.conf')
    tl.lab.log('Wrote %s' % args.out)
    _print_metrics(metrics(trace))
    if trace.fault is not None:
        print('Simulation fault: %s' % trace.fault, file=sys.stderr)
        return 3
    return 0


def cmd_train(args):
    config = _load_config(args)
    if args.episodes is not None:
        config.set('agent', 'max_episodes', args.episodes)
    tl = TuningLab(config, debug=args.debug or None)
    result = tl.train(seed=args.seed)
    export_policy(result.best_actor).save(args.out_policy)
    result.curve.to_csv(args.curve, index=False, lineterminator='\n')
    config.write(args.out_policy + '.conf')
    tl.lab.log('Wrote %s and %s' % (args.out_policy, args.curve))
    print('Trained %d episodes, best evaluation return %.1f%s' %
          (len(result.curve), result.best_eval_return,
           '' if result.converged else ' (target not reached)'))
    return 0


def cmd_evaluate(args):
    config = _load_config(args)
    tl = TuningLab(config, debug=args.debug or None)
    manual, tuned, cmp = tl.evaluate(PolicyFile.load(args.policy))
    if args.out_prefix:
        manual.write_csv(args.out_prefix + '_manual.csv')
        tuned.write_csv(args.out_prefix + '_policy.csv')
        config.write(args.out_prefix + '.conf')
        tl.lab.log('Wrote %s_manual.csv and %s_policy.csv' %
                   (args.out_prefix, args.out_prefix))
    print(format_comparison(cmp))
    return 0


def cmd_compare(args):
    a = SimTrace.read_csv(args.trace_a)
    b = SimTrace.read_csv(args.trace_b)
    print(format_comparison(compare(a, b), labels=(args.label_a,
                                                   args.label_b)))
    return 0


def cmd_export_policy(args):
    config = _load_config(args)
    sources = [args.policy is not None, args.zero, args.seed is not None]
    if sum(sources) != 1:
        raise _UsageError('export-policy needs exactly one of --policy, '
                          '--zero, --seed')
    if args.policy is not None:
        policy = PolicyFile.load(args.policy)
    else:
        rng = np.random.default_rng(args.seed if args.seed is not None
                                    else 0)
        net = make_actor(config.agent(), rng)
        if args.zero:
            net = DenseNet([DenseLayer(np.zeros_like(l.W),
                                       np.zeros_like(l.b),
                                       l.activation, l.N, l.Q)
                            for l in net.layers])
        policy = export_policy(net)
    policy.save(args.out)
    print('Wrote %s (%d layers, %d -> %d)' %
          (args.out, len(policy.layers), policy.obs_dim, policy.act_dim))
    return 0


def cmd_reconstruct_check(args):
    policy = PolicyFile.load(args.policy)
    net = policy.to_net()
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.trials):
        obs = rng.normal(0.0, args.scale, policy.obs_dim)
        d = np.max(np.abs(reconstruct_action(policy, obs) -
                          net.forward(obs)))
        worst = max(worst, float(d))
    print('%d trials, max deviation %r' % (args.trials, worst))
    return 0 if worst == 0.0 else 3


def build_parser():
    parser = UsageParser(prog='python3 -m quadtune.labs.TuningLab',
                         description='quadtune: quadrotor attitude gain '
                         'tuning lab')
    parser.add_argument('--version', action='version',
                        version='quadtune %s' % __version__)
    parser.add_argument('--debug', action='store_true', dest='debug',
                        default=False, help='Enable debug logging')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('simulate', help='Fly the mission once')
    p.add_argument('--config', type=str, default=None,
                   help='Run configuration file')
    p.add_argument('--gains', nargs='+', default=['manual'],
                   help='"manual" or "policy <policy file>"')
    p.add_argument('--out', type=str, required=True, help='Trace CSV')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('train', help='Tune the inner gains with DDPG')
    p.add_argument('--config', type=str, default=None,
                   help='Run configuration file')
    p.add_argument('--seed', type=int, default=None,
                   help='Seed (default: sim.seed)')
    p.add_argument('--episodes', type=int, default=None,
                   help='Override agent.max_episodes')
    p.add_argument('--out-policy', dest='out_policy', type=str,
                   required=True, help='Policy file (.json or .npz)')
    p.add_argument('--curve', type=str, required=True,
                   help='Training curve CSV')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('evaluate',
                       help='Compare the configured gains with a policy')
    p.add_argument('--policy', type=str, required=True, help='Policy file')
    p.add_argument('--config', type=str, default=None,
                   help='Run configuration file')
    p.add_argument('--out-prefix', dest='out_prefix', type=str,
                   default=None, help='Also write both traces')
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('compare', help='Compare two trace CSV files')
    p.add_argument('trace_a', type=str)
    p.add_argument('trace_b', type=str)
    p.add_argument('--label-a', dest='label_a', default='Manually tuned')
    p.add_argument('--label-b', dest='label_b', default='RL fine-tuned')
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser('export-policy',
                       help='Convert a policy file or write a new one')
    p.add_argument('--policy', type=str, default=None,
                   help='Policy file to convert')
    p.add_argument('--zero', action='store_true', default=False,
                   help='Zero-action policy')
    p.add_argument('--seed', type=int, default=None,
                   help='Freshly initialized actor with this seed')
    p.add_argument('--config', type=str, default=None,
                   help='Run configuration file (network size)')
    p.add_argument('--out', type=str, required=True,
                   help='Output policy file (.json or .npz)')
    p.set_defaults(func=cmd_export_policy)

    p = sub.add_parser('reconstruct-check',
                       help='Check exported actions against the network')
    p.add_argument('--policy', type=str, required=True, help='Policy file')
    p.add_argument('--trials', type=int, default=1000)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--scale', type=float, default=5.0,
                   help='Standard deviation of the random observations')
    p.set_defaults(func=cmd_reconstruct_check)

    return parser


def cli(argv=None):
    """
    Run one command.

    @returns exit status: 0 ok, 1 usage, 2 configuration or missing file,
             3 runtime fault
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1

    try:
        return args.func(args)
    except _UsageError as e:
        parser.print_usage(sys.stderr)
        print('error: %s' % e, file=sys.stderr)
        return 1
    except (ConfigError, FileNotFoundError) as e:
        print('error: %s' % e, file=sys.stderr)
        return 2
    except (QuadtuneError, OSError) as e:
        print('error: %s: %s' % (type(e).__name__, e), file=sys.stderr)
        return 3
    except ValueError as e:
        print('error: %s' % e, file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(cli())
