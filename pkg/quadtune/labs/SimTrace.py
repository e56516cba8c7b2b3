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
Simulation traces: one record per control step, CSV I/O with pandas,
and the attitude-error metrics used to compare gain sources.
"""

from quadtune.quadtune import (DimensionMismatch, EmptyTrace,
                               MissionMismatch, OutOfRange)

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd


COLUMNS = ['t', 'x', 'y', 'z', 'phi', 'theta', 'psi',
           'x_r', 'y_r', 'z_r', 'psi_r',
           'e_px', 'e_py', 'e_pz', 'e_phi', 'e_theta', 'e_psi',
           'e_eta_norm',
           'kP1_pt', 'kP1_psi', 'kP2_pt', 'kP2_psi', 'kD_pt',
           'n1', 'n2', 'n3', 'n4', 'n5',
           'reward', 'sat_flag']

GAIN_COLUMNS = ['kP1_pt', 'kP1_psi', 'kP2_pt', 'kP2_psi', 'kD_pt']


class SimTrace (object):
    def __init__(self, dt_agent=0.05, fault=None):
        """
        @param dt_agent  Agent sampling time, marks the reward instants
        @param fault     Fault annotation of a truncated run
        """
        super(SimTrace, self).__init__()
        self.dt_agent = dt_agent
        self.fault = fault
        self.rows = list()
        self._frame = None

    def __len__(self):
        if self._frame is not None and not self.rows:
            return len(self._frame)
        return len(self.rows)

    def record(self, row):
        """ Append one record, ordered as COLUMNS """
        if len(row) != len(COLUMNS):
            raise DimensionMismatch('Trace record has %d fields, expected %d'
                                    % (len(row), len(COLUMNS)))
        if self.rows and not row[0] > self.rows[-1][0]:
            raise OutOfRange('Trace time must increase: %r after %r' %
                             (row[0], self.rows[-1][0]))
        self.rows.append([float(x) for x in row])
        self._frame = None

    def set_last(self, name, value):
        """ Overwrite field @param name of the latest record """
        self.rows[-1][COLUMNS.index(name)] = float(value)
        self._frame = None

    def add_last(self, name, value):
        """ Add @param value to field @param name of the latest record """
        self.rows[-1][COLUMNS.index(name)] += float(value)
        self._frame = None

    def frame(self):
        """ The trace as a pandas DataFrame """
        if self._frame is None:
            self._frame = pd.DataFrame(self.rows, columns=COLUMNS)
        return self._frame

    def column(self, name):
        return self.frame()[name].to_numpy()

    def write_csv(self, path):
        with open(path, 'w') as f:
            f.write('# dt_agent=%r\n' % self.dt_agent)
            if self.fault is not None:
                f.write('# fault=%s\n' % self.fault.replace('\n', ' '))
            self.frame().to_csv(f, index=False, lineterminator='\n')
        return path

    @classmethod
    def read_csv(cls, path):
        meta = dict()
        with open(path, 'r') as f:
            for line in f:
                if not line.startswith('#'):
                    break
                k, _, v = line[1:].strip().partition('=')
                meta[k] = v
        df = pd.read_csv(path, comment='#', float_precision='round_trip')
        if list(df.columns) != COLUMNS:
            raise DimensionMismatch('%s: unexpected trace columns' % path)
        trace = cls(dt_agent=float(meta.get('dt_agent', 0.05)),
                    fault=meta.get('fault'))
        trace._frame = df.astype(float)
        return trace

    def agent_rows(self):
        """
        Boolean mask of records at agent-step instants t > 0.
        The last record of a faulted run closes its agent step too.
        """
        t = self.column('t')
        k = np.round(t / self.dt_agent)
        mask = (t > 0) & (np.abs(t - k * self.dt_agent) < 1e-9)
        if self.fault is not None and len(mask):
            mask[-1] = True
        return mask


@dataclass
class MetricsReport:
    rmse_eta: float
    peak_eta: float
    peak_time: float
    rmse_pos: float
    episode_return: float
    gain_min: dict = field(default_factory=dict)
    gain_max: dict = field(default_factory=dict)
    duration: float = 0.0
    fault: str = None


def rmse_attitude(trace):
    """ Root mean square of the attitude error norm over all records """
    if len(trace) == 0:
        raise EmptyTrace('Trace has no records')
    e = trace.column('e_eta_norm')
    return float(np.sqrt(np.mean(e * e)))


def trace_return(trace):
    """ Sum of the rewards recorded at agent-step instants """
    if len(trace) == 0:
        raise EmptyTrace('Trace has no records')
    return float(np.sum(trace.column('reward')[trace.agent_rows()]))


def largest_peaks(trace, n=2, separation=2.0):
    """
    The @param n largest attitude error norms at least @param separation
    seconds apart, largest first.

    @returns list of (t, e_eta_norm)
    """
    t = trace.column('t')
    e = trace.column('e_eta_norm').copy()
    peaks = list()
    while len(peaks) < n and np.any(np.isfinite(e)):
        i = int(np.nanargmax(e))
        peaks.append((float(t[i]), float(e[i])))
        e[np.abs(t - t[i]) < separation] = np.nan
    return peaks


def metrics(trace):
    if len(trace) == 0:
        raise EmptyTrace('Trace has no records')
    df = trace.frame()
    e = df['e_eta_norm'].to_numpy()
    ep = df[['e_px', 'e_py', 'e_pz']].to_numpy()
    i = int(np.argmax(e))
    return MetricsReport(
        rmse_eta=rmse_attitude(trace),
        peak_eta=float(e[i]),
        peak_time=float(df['t'].iloc[i]),
        rmse_pos=float(np.sqrt(np.mean(np.sum(ep * ep, axis=1)))),
        episode_return=trace_return(trace),
        gain_min={k: float(df[k].min()) for k in GAIN_COLUMNS},
        gain_max={k: float(df[k].max()) for k in GAIN_COLUMNS},
        duration=float(df['t'].iloc[-1]),
        fault=trace.fault)


@dataclass
class Comparison:
    a: MetricsReport
    b: MetricsReport
    deltas: dict
    improvement_pct: dict


def _improvement(a, b):
    """ Relative reduction from a to b in percent """
    if a == 0:
        return 0.0 if b == 0 else -math.inf
    return 100.0 * (a - b) / a


def compare(trace_a, trace_b):
    """
    Side-by-side metrics of two runs of the same mission.
    deltas are b - a, improvements are the relative reduction a -> b.
    """
    ta, tb = trace_a.column('t'), trace_b.column('t')
    if len(ta) != len(tb) or not np.allclose(ta, tb, rtol=0, atol=1e-9):
        raise MissionMismatch('Traces cover different missions '
                              '(%d records to %.3fs vs %d records to %.3fs)'
                              % (len(ta), ta[-1] if len(ta) else 0,
                                 len(tb), tb[-1] if len(tb) else 0))
    ma, mb = metrics(trace_a), metrics(trace_b)
    keys = ('rmse_eta', 'peak_eta', 'rmse_pos', 'episode_return')
    deltas = {k: getattr(mb, k) - getattr(ma, k) for k in keys}
    improvement = {k: _improvement(getattr(ma, k), getattr(mb, k))
                   for k in keys[:3]}
    return Comparison(ma, mb, deltas, improvement)


def format_comparison(cmp, labels=('Manually tuned', 'RL fine-tuned')):
    """ RMSE table of a Comparison, one line per controller """
    w = max(len(labels[0]), len(labels[1]), len('Improvement')) + 2
    lines = ['%-*s %16s %16s %12s' % (w, 'Controller', '|e_eta|_RMSE',
                                      'peak |e_eta|', 'return'),
             '%-*s %16s %16s %12s' % (w, '', '[x1e-3 rad]', '[x1e-3 rad]',
                                      '')]
    for label, m in zip(labels, (cmp.a, cmp.b)):
        lines.append('%-*s %16.2f %16.2f %12.1f' %
                     (w, label, m.rmse_eta * 1e3, m.peak_eta * 1e3,
                      m.episode_return))
    lines.append('%-*s %15.1f%% %15.1f%%' %
                 (w, 'Improvement', cmp.improvement_pct['rmse_eta'],
                  cmp.improvement_pct['peak_eta']))
    return '\n'.join(lines)
