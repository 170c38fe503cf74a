"""Exception types. Each carries the exit code the CLI maps it to."""

from __future__ import annotations


class CycleMatchError(Exception):
    exit_code = 1


class ParameterError(CycleMatchError, ValueError):
    exit_code = 3


class MeshParseError(CycleMatchError, ValueError):
    exit_code = 4


class TopologyError(CycleMatchError, ValueError):
    exit_code = 5


class DimensionError(CycleMatchError, ValueError):
    exit_code = 6


class EigenSolverError(CycleMatchError, RuntimeError):
    exit_code = 7


class SolverError(CycleMatchError, RuntimeError):
    exit_code = 8


class ProtocolError(SolverError):
    exit_code = 9


class EnergyMismatchError(SolverError):
    exit_code = 10


class ConfigError(CycleMatchError, ValueError):
    exit_code = 11
