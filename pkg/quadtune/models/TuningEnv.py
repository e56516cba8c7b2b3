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
Gain-tuning environment around the simulated mission, episode rollouts
and the DDPG training loop.

Every agent step the policy picks the five normalized weights, the inner
gains are set from them and held for the whole agent interval while the
controller and the plant run at their own rates.
"""

from quadtune.quadtune import (Component, ConfigError, DegenerateThrust,
                               NonFiniteState, SingularAttitude)
from quadtune.models.QuadrotorModel import QuadrotorModel, RigidBodyState
from quadtune.models.CascadedController import CascadedController, GainSet
from quadtune.models.MissionTrajectory import (TrajectoryConfig,
                                               mission_duration, reference_at)
from quadtune.models.DdpgAgent import (ACT_DIM, AgentConfig, Transition,
                                       apply_action, observe, reward)
from quadtune.models.DenseNet import reconstruct_action
from quadtune.labs.SimTrace import SimTrace

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

CURVE_COLUMNS = ['episode', 'return', 'moving_average', 'eval_return',
                 'noise_sigma', 'critic_loss', 'actor_objective', 'steps',
                 'terminated_early']


def step_ratio(slow, fast, what):
    """ Number of @param fast steps in one @param slow step """
    n = int(round(slow / fast))
    if n < 1 or abs(n * fast - slow) > 1e-9 * max(1.0, slow):
        raise ConfigError('%s: %r is not an integer multiple of %r' %
                          (what, slow, fast))
    return n


class ZeroPolicy (object):
    """ Always the zero action: the base gains are flown unchanged. """

    def act(self, obs, explore=False):
        return np.zeros(ACT_DIM)


class ExportedPolicy (object):
    """ Gain source backed by an exported PolicyFile """

    def __init__(self, policy):
        super(ExportedPolicy, self).__init__()
        self.policy = policy

    def act(self, obs, explore=False):
        return reconstruct_action(self.policy, obs)


class TuningEnv (Component):
    default_conf = {'dt_physics': 1e-3,
                    'dt_ctrl': 0.005,
                    'tau_filter': 0.02,
                    'tilt_limit': 0.5,
                    'tilt_guard': 0.1}

    def __init__(self, lab, params=None, gains=None, trajectory=None,
                 agent_config=None, disturbance=None, conf=None):
        """
        @param lab           Owning Lab
        @param params        QuadrotorParams
        @param gains         GainSet, its inner gains are the tuning base
        @param trajectory    TrajectoryConfig
        @param agent_config  AgentConfig (dt_agent, search rate, guards)
        @param disturbance   DisturbanceConfig
        @param conf          Configuration dict, see default_conf.
        """
        super(TuningEnv, self).__init__(lab, conf=conf)
        self.trajectory = trajectory if trajectory is not None \
            else TrajectoryConfig()
        self.agent_config = agent_config if agent_config is not None \
            else AgentConfig()
        self.gains = gains if gains is not None else GainSet()

        self.model = QuadrotorModel(lab, params=params,
                                    disturbance=disturbance,
                                    conf={'dt_physics':
                                          self.conf['dt_physics']})
        self.params = self.model.params
        self.controller = CascadedController(
            lab, self.params, gains=self.gains,
            conf={k: self.conf[k] for k in ('dt_ctrl', 'tau_filter',
                                            'tilt_limit', 'tilt_guard')})

        self.dt_ctrl = self.conf['dt_ctrl']
        self.dt_agent = self.agent_config.dt_agent
        self.n_phys = step_ratio(self.dt_ctrl, self.model.dt, 'dt_ctrl')
        self.n_ctrl = step_ratio(self.dt_agent, self.dt_ctrl, 'dt_agent')
        self.duration = mission_duration(self.trajectory)
        self.ctrl_steps_total = int(math.ceil(self.duration / self.dt_ctrl
                                              - 1e-9))
        self.agent_steps_total = int(math.ceil(self.ctrl_steps_total /
                                               self.n_ctrl))
        self.trace = None

    def _errors(self, s, ref):
        obs = observe(s, ref, self.controller.setpoint)
        return obs, float(np.linalg.norm(obs[9:12]))

    def _record(self, t, s, ref, obs, e_norm, sat):
        g = self.controller.gains.inner
        self.trace.record(
            [t] + list(s.p) + list(s.eta) + list(ref.p_r) + [ref.psi_r] +
            list(obs[6:12]) + [e_norm] + list(g.as_array()) +
            list(self.action) + [self.last_reward, float(sat)])

    def reset(self):
        """
        Start a new episode at the mission start point, at rest.
        @returns the first observation
        """
        ref = reference_at(0.0, self.trajectory)
        self.model.reset(RigidBodyState.at_rest(ref.p_r, ref.psi_r))
        self.controller.reset()
        self.k_ctrl = 0
        self.k_agent = 0
        self.action = np.zeros(ACT_DIM)
        self.last_reward = 0.0
        self.done = False
        self.fault = None
        self.trace = SimTrace(dt_agent=self.dt_agent)
        obs, e_norm = self._errors(self.model.state, ref)
        self._record(0.0, self.model.state, ref, obs, e_norm, False)
        self.obs = obs
        return obs

    def step(self, action):
        """
        Apply normalized weights @param action for one agent interval.

        @returns (observation, reward, done, info)
        """
        if self.done:
            raise ConfigError('step() after the episode ended, call reset()')
        if action is None:
            action = np.zeros(ACT_DIM)
        self.action = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        self.controller.set_inner(apply_action(
            self.action, self.gains.inner, self.agent_config.search_rate))

        rows = len(self.trace)
        s = self.model.state
        ref = None
        for _ in range(self.n_ctrl):
            if self.k_ctrl >= self.ctrl_steps_total:
                break
            t = self.k_ctrl * self.dt_ctrl
            try:
                thrusts = self.controller.step(s, reference_at(
                    t, self.trajectory))
                s = self.model.advance(thrusts, self.n_phys)
            except (SingularAttitude, NonFiniteState, DegenerateThrust) as e:
                self.fault = '%s: %s' % (type(e).__name__, e)
                self.log('Simulation fault at t=%.3fs: %s' % (t, self.fault))
                break
            self.k_ctrl += 1
            t = min(self.k_ctrl * self.dt_ctrl, self.duration)
            ref = reference_at(t, self.trajectory)
            obs, e_norm = self._errors(s, ref)
            self._record(t, s, ref, obs, e_norm, thrusts.saturated)
        self.k_agent += 1

        if self.fault is None:
            r = reward(e_norm)
            self.obs = obs
        else:
            r = reward(math.inf)
            self.trace.fault = self.fault
        self.last_reward = r
        if len(self.trace) > rows:
            self.trace.set_last('reward', r)
        else:
            # nothing recorded in this interval, keep the earlier reward
            self.trace.add_last('reward', r)

        info = {'t': self.k_ctrl * self.dt_ctrl,
                'terminated_early': False,
                'fault': self.fault}
        if self.fault is not None:
            info['terminated_early'] = True
        elif e_norm > self.agent_config.divergence_eta or \
                np.linalg.norm(obs[6:9]) > self.agent_config.divergence_pos:
            info['terminated_early'] = True
            self.log('Diverged at t=%.3fs: |e_eta|=%.4f, |e_p|=%.3f' %
                     (info['t'], e_norm, np.linalg.norm(obs[6:9])))
        self.done = info['terminated_early'] or \
            self.k_ctrl >= self.ctrl_steps_total
        info['e_eta_norm'] = e_norm if self.fault is None else math.inf
        return self.obs.copy(), r, self.done, info


@dataclass
class EpisodeLog:
    episode_return: float
    steps: int
    terminated_early: bool
    trace: SimTrace
    rewards: np.ndarray = field(default_factory=lambda: np.zeros(0))
    actions: np.ndarray = field(default_factory=lambda: np.zeros((0,
                                                                  ACT_DIM)))
    fault: str = None


def run_episode(env, policy=None, explore=False, seed=None,
                on_transition=None):
    """
    Fly one full mission.

    @param env            TuningEnv
    @param policy         Gain source with act(obs, explore): a DdpgAgent,
                          ExportedPolicy or ZeroPolicy. None flies the
                          base gains.
    @param explore        Add the policy's exploration noise
    @param seed           Seed of the exploration noise for this episode
    @param on_transition  Called with every Transition
    @returns EpisodeLog
    """
    if policy is None:
        policy = ZeroPolicy()
    if explore and hasattr(policy, 'noise'):
        policy.noise.reset(np.random.default_rng(seed)
                           if seed is not None else None)

    obs = env.reset()
    rewards = list()
    actions = list()
    done = False
    info = {'terminated_early': False}
    while not done:
        a = np.asarray(policy.act(obs, explore=explore), dtype=float)
        obs_next, r, done, info = env.step(a)
        rewards.append(r)
        actions.append(a)
        if on_transition is not None:
            on_transition(Transition(obs, a, r, obs_next, done))
        obs = obs_next

    return EpisodeLog(episode_return=float(np.sum(rewards)),
                      steps=len(rewards),
                      terminated_early=info['terminated_early'],
                      trace=env.trace,
                      rewards=np.array(rewards),
                      actions=np.array(actions).reshape(-1, ACT_DIM),
                      fault=env.fault)


@dataclass
class TrainingResult:
    agent: object
    best_actor: object
    best_eval_return: float
    curve: pd.DataFrame
    converged: bool


def train(env, agent, seed=0, explore=True, on_episode=None):
    """
    Episodic DDPG loop. Each agent step stores its transition and, once
    the replay memory holds a full batch, runs one update.
    Stops when the moving average of the episode returns reaches the
    target or after max_episodes.

    @param env         TuningEnv
    @param agent       DdpgAgent
    @param seed        Seed of the per-episode exploration noise
    @param on_episode  Called with each curve row (dict)
    @returns TrainingResult
    """
    c = agent.config
    rng = np.random.default_rng(seed)
    rows = list()
    returns = list()
    best_actor = agent.actor.copy()
    best_eval = -math.inf
    converged = False

    for episode in range(c.max_episodes):
        losses = list()

        def store(t):
            agent.remember(t)
            if agent.ready():
                losses.append(agent.update())

        sigma = agent.noise.sigma
        log = run_episode(env, agent, explore=explore,
                          seed=int(rng.integers(2 ** 31)),
                          on_transition=store)
        agent.noise.end_episode()
        returns.append(log.episode_return)
        moving = float(np.mean(returns[-c.window:]))

        eval_return = math.nan
        if episode % c.eval_interval == 0:
            eval_return = run_episode(env, agent,
                                      explore=False).episode_return
            if eval_return > best_eval:
                best_eval = eval_return
                best_actor = agent.actor.copy()

        row = {'episode': episode,
               'return': log.episode_return,
               'moving_average': moving,
               'eval_return': eval_return,
               'noise_sigma': sigma,
               'critic_loss': float(np.mean([l[0] for l in losses]))
               if losses else math.nan,
               'actor_objective': float(np.mean([l[1] for l in losses]))
               if losses else math.nan,
               'steps': log.steps,
               'terminated_early': int(log.terminated_early)}
        rows.append(row)
        agent.log('Episode %d: return %.1f, moving average %.1f, '
                  'eval %.1f, %d steps%s' %
                  (episode, log.episode_return, moving, eval_return,
                   log.steps, ' (terminated early)'
                   if log.terminated_early else ''))
        if on_episode is not None:
            on_episode(row)

        if moving >= c.target_return:
            converged = True
            agent.log('Target average return %.1f reached after %d '
                      'episodes' % (c.target_return, episode + 1))
            break

    if not converged:
        agent.log('Target average return %.1f not reached in %d episodes' %
                  (c.target_return, c.max_episodes))

    return TrainingResult(agent=agent, best_actor=best_actor,
                          best_eval_return=best_eval,
                          curve=pd.DataFrame(rows, columns=CURVE_COLUMNS),
                          converged=converged)
