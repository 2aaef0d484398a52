"""
LAB ERRORS
Exception hierarchy shared by the oracles, rules, runner and CLI
"""

from typing import Optional

import numpy as np


class LabError(Exception):
    """Root of every error raised by the lab"""


class DomainError(LabError, ValueError):
    """Argument outside an operation's mathematical domain"""


class UnknownPromptError(LabError, KeyError):
    """Prompt label not declared in the world"""

    def __init__(self, label: str):
        super().__init__(label)
        self.label = label

    def __str__(self) -> str:
        return f"unknown prompt label: {self.label!r}"


class CameraIndexError(LabError, IndexError):
    """Camera index outside the generator's camera list"""


class ConfigurationError(LabError):
    """Inconsistent experiment or rule configuration"""

    def __init__(self, message: str, location: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.location = location

    def __str__(self) -> str:
        if self.location:
            return f"{self.location}: {self.message}"
        return self.message


class SurrogateStateError(LabError):
    """VSD surrogate asked to fit without renders"""


class DivergedError(LabError):
    """Non-finite parameters encountered during optimization"""

    def __init__(self, step: int, theta: np.ndarray):
        super().__init__(f"optimization diverged at step {step}: theta={theta.tolist()}")
        self.step = step
        self.theta = theta


def exit_code_for(exc: BaseException) -> int:
    """CLI exit code for a failure"""
    if isinstance(exc, DivergedError):
        return 2
    return 1
