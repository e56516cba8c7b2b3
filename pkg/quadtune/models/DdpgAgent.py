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
DDPG gain tuner: observation and reward of the tuning task, the
action-to-gain map, replay memory, exploration noise and the
actor-critic learner.
"""

from quadtune.quadtune import (Component, ConfigError, DimensionMismatch,
                               InsufficientExperience, OutOfRange)
from quadtune.models.DenseNet import DenseNet, AdamState, adam_step
from quadtune.models.CascadedController import InnerGains, wrap_angle

import math
from dataclasses import dataclass, fields

import numpy as np

OBS_DIM = 12
ACT_DIM = 5

# Attitude error norm thresholds [rad] and the reward of each band,
# worst band first.
REWARD_THRESHOLDS = (0.04, 0.01, 0.001, 0.0005, 0.0001)
REWARD_LEVELS = (-25.0, -15.0, -10.0, -5.0, -1.0, 10.0)


def observe(s, ref, sp):
    """
    Observation [p, eta, e_p, e_eta] with e_p = p_r - p and
    e_eta = setpoint - eta (yaw wrapped).

    @param s    RigidBodyState
    @param ref  ReferencePoint
    @param sp   AttitudeSetpoint
    """
    e_p = ref.p_r - s.p
    e_eta = np.array([sp.phi_r - s.eta[0],
                      sp.theta_r - s.eta[1],
                      wrap_angle(sp.psi_r - s.eta[2])])
    return np.concatenate((s.p, s.eta, e_p, e_eta))


def apply_action(a, base, search_rate):
    """
    k_new = k_base * (1 + search_rate * n) for the five inner gains.

    @param a            Action, 5 normalized weights in [-1, 1]
    @param base         InnerGains the action is relative to
    @param search_rate  Relative search interval
    @returns InnerGains
    """
    n = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
    if n.shape != (ACT_DIM,):
        raise DimensionMismatch('Action must have %d entries, not shape %s' %
                                (ACT_DIM, n.shape))
    return InnerGains.from_array(base.as_array() * (1.0 + search_rate * n))


def reward(e_eta_norm):
    """ Piecewise-constant reward of the attitude error norm """
    if e_eta_norm < 0:
        raise OutOfRange('Error norm must be >= 0, not %r' % e_eta_norm)
    if not math.isfinite(e_eta_norm):
        return REWARD_LEVELS[0]
    for threshold, level in zip(REWARD_THRESHOLDS[:4], REWARD_LEVELS):
        if e_eta_norm >= threshold:
            return level
    if e_eta_norm > REWARD_THRESHOLDS[4]:
        return REWARD_LEVELS[4]
    return REWARD_LEVELS[5]


def episode_return_from_counts(counts):
    """
    @param counts  Number of agent steps spent in each reward band,
                   worst band first
    @returns the episode return
    """
    c = np.asarray(counts)
    if c.shape != (len(REWARD_LEVELS),):
        raise DimensionMismatch('Expected %d counts, not shape %s' %
                                (len(REWARD_LEVELS), c.shape))
    if np.any(c < 0) or np.any(c != np.round(c)):
        raise OutOfRange('Counts must be non-negative integers')
    return float(np.dot(c, REWARD_LEVELS))


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.r)


class ReplayBuffer (object):
    """
    FIFO ring of transitions in preallocated numpy arrays.
    Storage grows in chunks up to the capacity.
    """

    CHUNK = 4096

    def __init__(self, capacity, obs_dim=OBS_DIM, act_dim=ACT_DIM):
        super(ReplayBuffer, self).__init__()
        if capacity < 1:
            raise ConfigError('Replay capacity must be >= 1')
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.size = 0
        self.head = 0   # next slot to write
        self._alloc(min(self.CHUNK, self.capacity))

    def _alloc(self, n):
        def grow(old, shape):
            new = np.zeros(shape)
            if old is not None:
                new[:len(old)] = old
            return new
        get = lambda k: getattr(self, k, None)  # noqa: E731
        self.s = grow(get('s'), (n, self.obs_dim))
        self.a = grow(get('a'), (n, self.act_dim))
        self.r = grow(get('r'), (n,))
        self.s_next = grow(get('s_next'), (n, self.obs_dim))
        self.done = grow(get('done'), (n,))

    def __len__(self):
        return self.size

    def push(self, t):
        """ Store a copy of Transition @param t, evicting the oldest """
        if self.head >= len(self.r):
            self._alloc(min(2 * len(self.r), self.capacity))
        i = self.head
        self.s[i] = t.s
        self.a[i] = t.a
        self.r[i] = t.r
        self.s_next[i] = t.s_next
        self.done[i] = float(t.done)
        self.head = (self.head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, k):
        """ k-th oldest stored transition """
        if not 0 <= k < self.size:
            raise IndexError(k)
        i = (self.head - self.size + k) % self.capacity
        return Transition(self.s[i].copy(), self.a[i].copy(),
                          float(self.r[i]), self.s_next[i].copy(),
                          bool(self.done[i]))

    def sample(self, n, rng):
        """ Uniform draw of @param n distinct transitions """
        if self.size < n:
            raise InsufficientExperience('%d transitions stored, %d '
                                         'requested' % (self.size, n))
        idx = rng.choice(self.size, size=n, replace=False)
        return Batch(self.s[idx], self.a[idx], self.r[idx],
                     self.s_next[idx], self.done[idx])


class GaussianNoise (object):
    def __init__(self, dim, sigma, decay, rng):
        super(GaussianNoise, self).__init__()
        self.dim = dim
        self.sigma = sigma
        self.decay = decay
        self.rng = rng

    def reset(self, rng=None):
        if rng is not None:
            self.rng = rng

    def sample(self):
        return self.rng.normal(0.0, self.sigma, self.dim)

    def end_episode(self):
        self.sigma *= self.decay


class OUNoise (object):
    """ Ornstein-Uhlenbeck process, restarted at mu every episode """

    def __init__(self, dim, sigma, decay, rng, theta=0.15, mu=0.0):
        super(OUNoise, self).__init__()
        self.dim = dim
        self.sigma = sigma
        self.decay = decay
        self.theta = theta
        self.mu = mu
        self.rng = rng
        self.x = np.full(dim, mu, dtype=float)

    def reset(self, rng=None):
        if rng is not None:
            self.rng = rng
        self.x = np.full(self.dim, self.mu, dtype=float)

    def sample(self):
        dx = self.theta * (self.mu - self.x) + \
            self.sigma * self.rng.standard_normal(self.dim)
        self.x = self.x + dx
        return self.x.copy()

    def end_episode(self):
        self.sigma *= self.decay


def soft_update(target, source, tau_soft):
    """ target <- tau_soft * source + (1 - tau_soft) * target, in place """
    if not target.same_architecture(source):
        raise DimensionMismatch('Target and source networks differ')
    for t, s in zip(target.params(), source.params()):
        t *= (1.0 - tau_soft)
        t += tau_soft * s
    return target


def critic_targets(r, done, q_next, gamma):
    """ y = r + gamma * (1 - done) * Q'(s', mu'(s')) """
    return r + gamma * (1.0 - done) * q_next


@dataclass
class AgentConfig:
    dt_agent: float = 0.05
    gamma: float = 0.99
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    l2: float = 1e-5
    adam_eps: float = 1e-8
    batch: int = 1024
    buffer: int = 1000000
    search_rate: float = 0.4
    tau_soft: float = 1e-3
    noise: str = 'gaussian'
    noise_sigma: float = 0.1
    noise_decay: float = 0.999
    ou_theta: float = 0.15
    target_return: float = 117.0
    max_episodes: int = 2000
    window: int = 20
    eval_interval: int = 10
    hidden_units: int = 128
    hidden_layers: int = 2
    final_init: float = 3e-3
    action_high: float = 1.0
    action_low: float = -1.0
    divergence_eta: float = 1.0
    divergence_pos: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError('gamma must be in [0, 1], not %r' % self.gamma)
        if not self.search_rate > 0:
            raise ConfigError('search_rate must be > 0')
        if not self.dt_agent > 0:
            raise ConfigError('dt_agent must be > 0')
        if not 1 <= self.batch <= self.buffer:
            raise ConfigError('batch %d must be in [1, buffer %d]' %
                              (self.batch, self.buffer))
        if not 0.0 <= self.tau_soft <= 1.0:
            raise ConfigError('tau_soft must be in [0, 1]')
        if self.noise not in ('gaussian', 'ou'):
            raise ConfigError('noise must be gaussian or ou, not %r' %
                              self.noise)
        for key in ('max_episodes', 'window', 'eval_interval',
                    'hidden_units', 'hidden_layers'):
            if getattr(self, key) < 1:
                raise ConfigError('%s must be >= 1' % key)
        if not self.action_low < self.action_high:
            raise ConfigError('action_low must be < action_high')
        if not self.final_init > 0:
            raise ConfigError('final_init must be > 0')

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


def make_actor(config, rng):
    """ Actor: observation -> tanh hidden layers -> clipped_relu action """
    hidden = [config.hidden_units] * config.hidden_layers
    return DenseNet.init([OBS_DIM] + hidden + [ACT_DIM],
                         ['tanh'] * config.hidden_layers + ['clipped_relu'],
                         rng, N=config.action_high, Q=config.action_low,
                         out_lim=config.final_init)


def make_critic(config, rng):
    """ Critic: (observation, action) -> tanh hidden layers -> Q """
    hidden = [config.hidden_units] * config.hidden_layers
    return DenseNet.init([OBS_DIM + ACT_DIM] + hidden + [1],
                         ['tanh'] * config.hidden_layers + ['linear'],
                         rng, out_lim=config.final_init)


def make_noise(config, rng, dim=ACT_DIM):
    if config.noise == 'ou':
        return OUNoise(dim, config.noise_sigma, config.noise_decay, rng,
                       theta=config.ou_theta)
    return GaussianNoise(dim, config.noise_sigma, config.noise_decay, rng)


def critic_update(critic, adam, x, y):
    """
    One regression step of @param critic toward targets @param y.
    @returns mean squared error before the step
    """
    q = critic.forward(x, cache=True)[:, 0]
    err = q - y
    grads, _ = critic.backward((2.0 / len(y) * err)[:, None])
    adam_step(adam, critic.params(), grads)
    return float(np.mean(err * err))


def actor_update(actor, critic, adam, s):
    """
    One ascent step of the mean critic value Q(s, actor(s)).
    The action gradient is taken through critic.backward(); the critic
    itself is not changed.

    @returns the mean critic value before the step
    """
    mu = actor.forward(s, cache=True)
    q = critic.forward(np.hstack((s, mu)), cache=True)
    _, dx = critic.backward(np.full_like(q, 1.0 / len(s)))
    grads, _ = actor.backward(-dx[:, s.shape[1]:])
    adam_step(adam, actor.params(), grads)
    return float(np.mean(q))


def ddpg_update(agent, batch, config):
    """
    Critic regression toward the target-network bootstrap, actor ascent
    along the critic's action gradient, then soft target updates.

    @returns (critic_loss, actor_objective)
    """
    if len(batch) == 0:
        raise InsufficientExperience('Empty batch')
    a_next = agent.actor_target.forward(batch.s_next)
    q_next = agent.critic_target.forward(np.hstack((batch.s_next,
                                                    a_next)))[:, 0]
    y = critic_targets(batch.r, batch.done, q_next, config.gamma)

    critic_loss = critic_update(agent.critic, agent.critic_adam,
                                np.hstack((batch.s, batch.a)), y)
    actor_objective = actor_update(agent.actor, agent.critic,
                                   agent.actor_adam, batch.s)

    soft_update(agent.actor_target, agent.actor, config.tau_soft)
    soft_update(agent.critic_target, agent.critic, config.tau_soft)
    return critic_loss, actor_objective


class DdpgAgent (Component):
    """ Actor-critic learner with target networks and replay memory. """

    default_conf = {'seed': 0}

    def __init__(self, lab, config=None, conf=None):
        """
        @param lab     Owning Lab
        @param config  AgentConfig
        @param conf    Configuration dict:
         * seed - seed of network initialization, sampling and noise
        """
        super(DdpgAgent, self).__init__(lab, conf=conf)
        self.config = config if config is not None else AgentConfig()
        c = self.config
        self.rng = np.random.default_rng(self.conf['seed'])

        self.actor = make_actor(c, self.rng)
        self.critic = make_critic(c, self.rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()

        self.actor_adam = AdamState.for_params(self.actor.params(),
                                               lr=c.lr_actor,
                                               eps=c.adam_eps, l2=c.l2)
        self.critic_adam = AdamState.for_params(self.critic.params(),
                                                lr=c.lr_critic,
                                                eps=c.adam_eps, l2=c.l2)
        self.buffer = ReplayBuffer(c.buffer)
        self.noise = make_noise(c, self.rng)
        self.updates = 0

    def act(self, obs, explore=False):
        """ Actor output, plus exploration noise clipped to the bounds """
        a = self.actor.forward(obs)
        if explore:
            a = np.clip(a + self.noise.sample(), self.config.action_low,
                        self.config.action_high)
        return a

    def remember(self, t):
        self.buffer.push(t)

    def ready(self):
        return len(self.buffer) >= self.config.batch

    def update(self):
        """ Sample a minibatch and run one ddpg_update """
        batch = self.buffer.sample(self.config.batch, self.rng)
        losses = ddpg_update(self, batch, self.config)
        self.updates += 1
        return losses
