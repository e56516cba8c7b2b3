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


import os
import time
import datetime
from copy import deepcopy


class QuadtuneError (Exception):
    """ Base class of all quadtune errors """
    pass


class SingularAttitude (QuadtuneError):
    """ Pitch too close to +-pi/2: the Euler-rate map is not invertible """
    pass


class NonFiniteState (QuadtuneError):
    pass


class DegenerateThrust (QuadtuneError):
    """ Collective thrust too small to invert the lateral thrust map """
    pass


class OutOfRange (QuadtuneError, ValueError):
    pass


class DimensionMismatch (QuadtuneError, ValueError):
    pass


class UnsupportedActivation (QuadtuneError, ValueError):
    pass


class InsufficientExperience (QuadtuneError):
    pass


class EmptyTrace (QuadtuneError, ValueError):
    pass


class MissionMismatch (QuadtuneError, ValueError):
    pass


class ConfigError (QuadtuneError, ValueError):
    pass


class Lab (object):
    def __init__(self, name, root_path, debug=False):
        """
        A lab holds the components of one experiment (plant, controller,
        agent, environment) and the directory their output files go to.

        @param name       Lab name, used in log lines and as directory name
        @param root_path  Parent directory of all lab instances
        @param debug      Emit dbg() messages
        """
        super(Lab, self).__init__()
        self.debug = debug
        self.name = name
        self.instance = str(int(time.time()))[2:]
        self.root_path = os.path.join(os.path.abspath(root_path), name)
        self.id_next = 1

    def log(self, msg):
        print('[%s] %s: %s' % (datetime.datetime.now(), self.name, msg))

    def dbg(self, msg):
        if self.debug:
            return self.log(msg)

    def instance_path(self):
        """ Returns the instance path """
        return os.path.join(self.root_path, self.instance)


class Allocator (object):
    def __init__(self, lab):
        super(Allocator, self).__init__()
        self.lab = lab

    def next(self, component=None):
        compid = self.lab.id_next
        self.lab.id_next += 1
        return compid


class Component (object):
    # Subclasses override with their own defaults.
    default_conf = {}

    def __init__(self, lab, conf=None):
        """
        @param lab   Owning Lab
        @param conf  Configuration dict, merged over default_conf.
                     Keys with None values are ignored.
        """
        self.compid = Allocator(lab).next(self)
        self.name = self.__class__.__name__
        self.lab = lab
        self.debug = lab.debug

        self.conf = deepcopy(self.default_conf)
        if conf is not None:
            self.conf.update(deepcopy({k: v for k, v in conf.items()
                                       if v is not None}))

        self.conf['compid'] = self.compid
        self.conf['name'] = self.name

        self.dbg('Creating %s instance' % self.name)

    def log(self, msg):
        print('[%s] %s-%s: %s' %
              (datetime.datetime.now(), self.name, self.compid, msg))

    def dbg(self, msg):
        if self.debug:
            return self.log(msg)

    def root_path(self):
        return os.path.join(self.lab.instance_path(), self.name,
                            str(self.compid))

    def mkpath(self, relpath):
        """ Component-scoped path inside the lab instance directory """
        return os.path.join(self.root_path(), relpath)

    def create_file(self, relpath, data=None):
        path = self.mkpath(relpath)
        dirname = os.path.dirname(path)
        if not os.path.exists(dirname):
            os.makedirs(dirname)
        with open(path, 'wb') as f:
            if data is not None:
                if type(data) == str:
                    data = data.encode('utf-8')
                f.write(data)
        self.dbg('Wrote %s' % path)
        return path

    def __str__(self):
        return '{%s:%s}' % (self.name, self.compid)


if __name__ == '__main__':
    pass
