# -*- coding: utf-8 -*-
import pytest

from errors import StageOrderError
from fsm import State, StateMachine, TrainingState


class Recorder(State):
    def __init__(self, key, calls, machine=None, fail=False):
        self.key = key
        self.calls = calls
        self.machine = machine
        self.fail = fail

    def enter(self):
        self.calls.append(('enter', self.key))

    def leave(self):
        self.calls.append(('leave', self.key))

    def run(self):
        if self.machine is not None:
            assert self.machine.current_state is self
        if self.fail:
            raise RuntimeError(self.key)
        self.calls.append(('run', self.key))
        return self.key * 2


def test_states_run_in_order():
    calls = []
    machine = StateMachine(('a', 'b', 'c'))
    assert machine.pending == ['a', 'b', 'c']
    assert machine.run_state(Recorder('a', calls, machine)) == 'aa'
    with pytest.raises(StageOrderError, match='c'):
        machine.run_state(Recorder('c', calls))
    machine.run_state(Recorder('b', calls))
    assert machine.pending == ['c']
    assert machine.current_state is None
    assert calls == [('enter', 'a'), ('run', 'a'), ('leave', 'a'),
                     ('enter', 'b'), ('run', 'b'), ('leave', 'b')]


def test_completed_states_and_unknown_keys():
    machine = StateMachine((1, 2, 3), completed=(1, 2))
    machine.check_order(3)
    assert machine.pending == [3]
    with pytest.raises(ValueError):
        machine.check_order(4)


def test_leave_runs_when_a_state_fails():
    calls = []
    machine = StateMachine(('a', 'b'))
    with pytest.raises(RuntimeError):
        machine.run_state(Recorder('a', calls, fail=True))
    assert calls == [('enter', 'a'), ('leave', 'a')]
    assert machine.current_state is None
    assert machine.pending == ['a', 'b']


def test_states_need_run():
    with pytest.raises(TypeError):
        TrainingState(object(), 1)

    class Epochs(TrainingState):
        def run(self):
            return [self.trainer, self.key]

    assert Epochs('trainer', 2).run() == ['trainer', 2]
