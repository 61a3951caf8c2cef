# -*- coding: utf-8 -*-

"""
Ordered state machine. Each state is keyed, runs once between enter()
and leave(), and may only run after every state ordered before it.
Staged training runs its stages as states of a StateMachine.
"""


from abc import ABCMeta, abstractmethod

from errors import StageOrderError


class State(metaclass=ABCMeta):

    """
    Abstract class representing the base class for all State classes.
    """

    key = None

    def enter(self):
        pass

    def leave(self):
        pass

    @abstractmethod
    def run(self):
        """Do the work of the state and return its result."""


class TrainingState(State, metaclass=ABCMeta):
    def __init__(self, trainer, key):
        self.trainer = trainer
        self.key = key


class StateMachine(object):

    """
    Runs states in the order given by 'order'. Keys in 'completed' count
    as already run.
    """

    def __init__(self, order, completed=()):
        self.order = tuple(order)
        self.completed = set(completed)
        self.current_state = None

    def check_order(self, key):
        if key not in self.order:
            raise ValueError('Unknown state {0!r}'.format(key))
        missing = [done for done in self.order[:self.order.index(key)]
                   if done not in self.completed]
        if missing:
            raise StageOrderError('Stage {0} needs stage(s) {1} first'.format(
                key, ', '.join(str(done) for done in missing)))

    def run_state(self, state):
        """Enter, run and leave 'state'; leave() runs even on errors."""
        self.check_order(state.key)
        self.current_state = state
        state.enter()
        try:
            result = state.run()
        finally:
            state.leave()
            self.current_state = None
        self.completed.add(state.key)
        return result

    @property
    def pending(self):
        return [key for key in self.order if key not in self.completed]
