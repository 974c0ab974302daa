"""
Flow error handling for step execution.

Wraps each step of the flow: on failure the error is logged, the state
before the step is dumped to disk and the failure is re-raised as FlowAbort
carrying the step index and the dump path.
"""

import logging

from common_utils.errors import FlowAbort


class FlowErrorHandler:
    """
    Step wrapper turning any failure inside a flow step into a FlowAbort.
    """

    def __init__(self, dump_state=None, log_steps: bool = False):
        """dump_state(step_index, u, state) -> path, called before re-raising."""
        self.dump_state = dump_state
        self.log_steps = log_steps
        self.logger = logging.getLogger(__name__)

    def wrap_step(self, step_index: int, handler, u, state):
        """Run handler(u, state) for one step."""
        if self.log_steps:
            self.logger.debug(f"Starting step {step_index}")
        try:
            return handler(u, state)
        except FlowAbort:
            raise
        except Exception as e:
            self.logger.exception(f"Flow step {step_index} failed: {e}")
            dump_path = None
            if self.dump_state is not None:
                try:
                    dump_path = str(self.dump_state(step_index, u, state))
                except Exception as dump_error:
                    self.logger.error(f"State dump for step {step_index} failed: {dump_error}")
            raise FlowAbort(str(e), step_index=step_index, dump_path=dump_path) from e
