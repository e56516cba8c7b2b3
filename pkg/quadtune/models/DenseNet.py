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
Dense feed-forward networks in numpy: forward, reverse-mode gradients,
Adam, and the policy file format used to export an actor and rebuild its
action from the raw weight matrices.
"""

from quadtune.quadtune import (ConfigError, DimensionMismatch,
                               UnsupportedActivation)

import json
import math
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ('tanh', 'linear', 'clipped_relu')

POLICY_VERSION = 1


def _check_activation(name):
    if name not in ACTIVATIONS:
        raise UnsupportedActivation('Unsupported activation %r, expected '
                                    'one of %s' %
                                    (name, ', '.join(ACTIVATIONS)))


def clipped_relu(z, N=1.0, Q=-1.0):
    """ min(N, max(Q, z)) """
    return np.minimum(N, np.maximum(Q, z))


@dataclass
class DenseLayer:
    """
    y = act(W x + b), W has shape (out, in).
    clipped_relu clips to [Q, N].
    """
    W: np.ndarray
    b: np.ndarray
    activation: str = 'tanh'
    N: float = 1.0
    Q: float = -1.0

    def __post_init__(self):
        _check_activation(self.activation)
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise DimensionMismatch('Layer weights %s and biases %s do not '
                                    'match' % (self.W.shape, self.b.shape))
        if not self.Q < self.N:
            raise ConfigError('Clip bounds must satisfy Q < N')

    @property
    def n_in(self):
        return self.W.shape[1]

    @property
    def n_out(self):
        return self.W.shape[0]

    def apply(self, z):
        if self.activation == 'tanh':
            return np.tanh(z)
        elif self.activation == 'clipped_relu':
            return clipped_relu(z, self.N, self.Q)
        return z

    def grad(self, z, y):
        """ d act / dz, given pre-activation z and output y """
        if self.activation == 'tanh':
            return 1.0 - y * y
        elif self.activation == 'clipped_relu':
            return ((z > self.Q) & (z < self.N)).astype(float)
        return np.ones_like(z)


class DenseNet (object):
    def __init__(self, layers):
        """
        @param layers  list of DenseLayer, consecutive dimensions must match
        """
        super(DenseNet, self).__init__()
        if len(layers) == 0:
            raise DimensionMismatch('A network needs at least one layer')
        for a, b in zip(layers[:-1], layers[1:]):
            if a.n_out != b.n_in:
                raise DimensionMismatch('Layer output %d does not match next '
                                        'layer input %d' % (a.n_out, b.n_in))
        self.layers = layers
        self._cache = None

    @classmethod
    def init(cls, sizes, activations, rng, N=1.0, Q=-1.0, out_lim=None):
        """
        Uniform initialization in +-1/sqrt(fan_in). The output layer uses
        +-@param out_lim instead when given.

        @param sizes        Layer widths including input, e.g. [12, 128, 5]
        @param activations  One activation per layer (len(sizes) - 1)
        @param rng          numpy Generator
        """
        if len(activations) != len(sizes) - 1:
            raise DimensionMismatch('%d activations for %d layers' %
                                    (len(activations), len(sizes) - 1))
        layers = list()
        last = len(activations) - 1
        for i, (n_in, n_out, act) in enumerate(zip(sizes[:-1], sizes[1:],
                                                   activations)):
            lim = 1.0 / math.sqrt(n_in)
            if i == last and out_lim is not None:
                lim = out_lim
            layers.append(DenseLayer(rng.uniform(-lim, lim, (n_out, n_in)),
                                     rng.uniform(-lim, lim, n_out),
                                     act, N, Q))
        return cls(layers)

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_out(self):
        return self.layers[-1].n_out

    def forward(self, x, cache=False):
        """
        Evaluate the network on one input vector or a batch (rows).

        @param cache  Keep the activations for a following backward()
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in or x.ndim > 2:
            raise DimensionMismatch('Input shape %s does not match network '
                                    'input %d' % (x.shape, self.n_in))
        trail = list() if cache else None
        h = x
        for layer in self.layers:
            if h.ndim == 1:
                z = layer.W @ h + layer.b
            else:
                z = h @ layer.W.T + layer.b
            y = layer.apply(z)
            if cache:
                trail.append((h, z, y))
            h = y
        if cache:
            self._cache = trail
        return h

    __call__ = forward

    def backward(self, upstream):
        """
        Reverse-mode pass for the last cached forward().

        @param upstream  dL/d(output), same shape as the cached output
        @returns (grads, dx): grads is a list [dW1, db1, dW2, db2, ...]
                 summed over the batch, dx is dL/d(input)
        """
        if self._cache is None:
            raise DimensionMismatch('backward() without a cached forward()')
        g = np.asarray(upstream, dtype=float)
        if g.shape != self._cache[-1][2].shape:
            raise DimensionMismatch('Upstream gradient shape %s does not '
                                    'match output %s' %
                                    (g.shape, self._cache[-1][2].shape))
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            h, z, y = self._cache[i]
            gz = g * layer.grad(z, y)
            if gz.ndim == 1:
                grads[2 * i] = np.outer(gz, h)
                grads[2 * i + 1] = gz
                g = layer.W.T @ gz
            else:
                grads[2 * i] = gz.T @ h
                grads[2 * i + 1] = gz.sum(axis=0)
                g = gz @ layer.W
        return grads, g

    def params(self):
        """ Parameter arrays (views), ordered W1, b1, W2, b2, ... """
        out = list()
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out

    def set_params(self, params):
        if len(params) != 2 * len(self.layers):
            raise DimensionMismatch('Expected %d parameter arrays, got %d' %
                                    (2 * len(self.layers), len(params)))
        for i, layer in enumerate(self.layers):
            W, b = params[2 * i], params[2 * i + 1]
            if W.shape != layer.W.shape or b.shape != layer.b.shape:
                raise DimensionMismatch('Parameter shapes do not match layer '
                                        '%d' % i)
            layer.W = np.array(W, dtype=float)
            layer.b = np.array(b, dtype=float)

    def vector(self):
        """ All parameters flattened into one vector """
        return np.concatenate([p.ravel() for p in self.params()])

    def same_architecture(self, other):
        return len(self.layers) == len(other.layers) and \
            all(a.W.shape == b.W.shape and a.activation == b.activation
                for a, b in zip(self.layers, other.layers))

    def copy(self):
        return DenseNet([DenseLayer(l.W.copy(), l.b.copy(), l.activation,
                                    l.N, l.Q) for l in self.layers])


@dataclass
class AdamState:
    """ Adam moments for one parameter list """
    m: list
    v: list
    lr: float = 1e-3
    eps: float = 1e-8
    l2: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    t: int = 0

    @classmethod
    def for_params(cls, params, lr=1e-3, eps=1e-8, l2=1e-5):
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params],
                   lr=lr, eps=eps, l2=l2)


def adam_step(state, params, grads):
    """
    One bias-corrected Adam step with the L2 term l2 * w added to each
    gradient. Updates @param params in place and returns them.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionMismatch('Parameter, gradient and moment counts '
                                'differ')
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.l2:
            g = g + state.l2 * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


@dataclass
class PolicyFile:
    """
    Exported actor: row-major weights, biases and activation tag per
    layer, the action bounds N and Q and the observation dimension.
    """
    obs_dim: int
    act_dim: int
    N: float
    Q: float
    layers: list = field(default_factory=list)
    version: int = POLICY_VERSION

    def __post_init__(self):
        self.validate()
        self._mats = None

    def validate(self):
        if self.version != POLICY_VERSION:
            raise ConfigError('Unsupported policy file version %r' %
                              (self.version,))
        if not self.layers:
            raise DimensionMismatch('Policy file has no layers')
        if not (math.isfinite(self.N) and math.isfinite(self.Q) and
                self.Q < self.N):
            raise ConfigError('Policy bounds must satisfy Q < N, not '
                              'Q=%r N=%r' % (self.Q, self.N))
        n_in = self.obs_dim
        for i, l in enumerate(self.layers):
            _check_activation(l['activation'])
            rows, cols = int(l['rows']), int(l['cols'])
            if cols != n_in:
                raise DimensionMismatch('Layer %d expects %d inputs, previous '
                                        'layer gives %d' % (i, cols, n_in))
            if len(l['weights']) != rows * cols or len(l['biases']) != rows:
                raise DimensionMismatch('Layer %d: %dx%d declared, %d weights '
                                        'and %d biases stored' %
                                        (i, rows, cols, len(l['weights']),
                                         len(l['biases'])))
            n_in = rows
        if n_in != self.act_dim:
            raise DimensionMismatch('Last layer gives %d outputs, act_dim is '
                                    '%d' % (n_in, self.act_dim))

    def matrices(self):
        """ @returns list of (W, b, activation), built once """
        if self._mats is None:
            self._mats = self._build_matrices()
        return self._mats

    def _build_matrices(self):
        return [(np.asarray(l['weights'], dtype=float).reshape(
                    int(l['rows']), int(l['cols'])),
                 np.asarray(l['biases'], dtype=float),
                 l['activation']) for l in self.layers]

    def to_net(self):
        return DenseNet([DenseLayer(W, b, act, self.N, self.Q)
                         for W, b, act in self.matrices()])

    def to_dict(self):
        return {'version': self.version,
                'obs_dim': self.obs_dim,
                'act_dim': self.act_dim,
                'bounds': {'N': self.N, 'Q': self.Q},
                'layers': [{'rows': int(l['rows']),
                            'cols': int(l['cols']),
                            'weights': [float(x) for x in l['weights']],
                            'biases': [float(x) for x in l['biases']],
                            'activation': l['activation']}
                           for l in self.layers]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1) + '\n'

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(obs_dim=int(d['obs_dim']), act_dim=int(d['act_dim']),
                       N=float(d['bounds']['N']), Q=float(d['bounds']['Q']),
                       layers=list(d['layers']), version=int(d['version']))
        except (KeyError, TypeError) as e:
            raise ConfigError('Malformed policy file: %s' % e)

    def save(self, path):
        """ Write as JSON text (.json) or numpy archive (.npz). """
        if str(path).endswith('.npz'):
            arrays = dict()
            header = self.to_dict()
            for i, (W, b, _) in enumerate(self.matrices()):
                arrays['W%d' % i] = W
                arrays['b%d' % i] = b
            for l in header['layers']:
                del l['weights']
                del l['biases']
            np.savez(path, header=np.array(json.dumps(header)), **arrays)
        elif str(path).endswith('.json'):
            with open(path, 'w') as f:
                f.write(self.to_json())
        else:
            raise ConfigError('Unknown policy file format for %s, use .json '
                              'or .npz' % path)
        return path

    @classmethod
    def load(cls, path):
        if str(path).endswith('.npz'):
            with np.load(path, allow_pickle=False) as z:
                d = json.loads(str(z['header']))
                for i, l in enumerate(d['layers']):
                    l['weights'] = z['W%d' % i].ravel()
                    l['biases'] = z['b%d' % i]
            return cls.from_dict(d)
        elif str(path).endswith('.json'):
            with open(path, 'r') as f:
                return cls.from_dict(json.load(f))
        raise ConfigError('Unknown policy file format for %s, use .json '
                          'or .npz' % path)


def export_policy(net, bounds=None):
    """
    Serialize an actor network.

    @param net     DenseNet whose last layer is clipped_relu
    @param bounds  (N, Q); defaults to the last layer's clip bounds
                   and must match the clip limits of every clipped_relu
                   layer
    @returns PolicyFile
    """
    for layer in net.layers:
        _check_activation(layer.activation)
    last = net.layers[-1]
    if last.activation != 'clipped_relu':
        raise UnsupportedActivation('An actor ends in clipped_relu, not %r' %
                                    last.activation)
    N, Q = bounds if bounds is not None else (last.N, last.Q)
    for i, l in enumerate(net.layers):
        if l.activation == 'clipped_relu' and (l.N, l.Q) != (N, Q):
            raise ConfigError('Layer %d clips to [%r, %r], policy bounds '
                              'are [%r, %r]' % (i, l.Q, l.N, Q, N))
    layers = [{'rows': l.n_out, 'cols': l.n_in,
               'weights': l.W.ravel(order='C').copy(),
               'biases': l.b.copy(),
               'activation': l.activation} for l in net.layers]
    return PolicyFile(obs_dim=net.n_in, act_dim=net.n_out, N=float(N),
                      Q=float(Q), layers=layers)


def reconstruct_action(policy, observation):
    """
    Evaluate an exported actor from its stored matrices only:
    tanh(W h + b) for hidden layers, min(N, max(Q, W h + b)) at the output.
    """
    obs = np.asarray(observation, dtype=float)
    if obs.shape != (policy.obs_dim,):
        raise DimensionMismatch('Observation shape %s, policy expects (%d,)' %
                                (obs.shape, policy.obs_dim))
    h = obs
    for W, b, act in policy.matrices():
        z = W @ h + b
        if act == 'tanh':
            h = np.tanh(z)
        elif act == 'clipped_relu':
            h = np.minimum(policy.N, np.maximum(policy.Q, z))
        else:
            h = z
    return h
