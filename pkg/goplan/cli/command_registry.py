from __future__ import annotations

import logging

from goplan.errors import UsageError

COMMAND_DOCUMENTATION = {
    "gen-data": "Generate the offline dataset",
    "pretrain": "Train dynamics, value function and weighted CGAN policy",
    "reanalyze": "Finetune on imagined trajectories",
    "eval": "Evaluate a trained policy in the true environment",
    "appendix-a": "Compare generators on the multi-modal bandit",
}


class CommandRegistry:
    def __init__(self):
        self._log = logging.getLogger("goplan.cli.CommandRegistry")
        self.handlers = {}

    def __contains__(self, item):
        return item in self.handlers

    @property
    def names(self) -> list[str]:
        return list(self.handlers)

    def register(self, command):
        def decorator(func):
            self.handlers[command] = func
            return func

        return decorator

    def execute(self, runner, command):
        if command not in self.handlers:
            raise UsageError(f"unknown command {command!r}, expected one of {self.names}")
        command_info = self._command_with_info(command)
        self._log.debug(f"Executing {command_info}")
        try:
            return self.handlers[command](runner)
        except Exception:
            self._log.error(f"Error during command {command_info}")
            raise

    def _command_with_info(self, command):
        return f"{command} ({COMMAND_DOCUMENTATION.get(command, 'Info not specified')})"
