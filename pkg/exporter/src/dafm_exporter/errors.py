"""Exporter error types, mapped to CLI exit codes."""


class ExporterError(Exception):
    exit_code = 1


class ModelLoadFailure(ExporterError):
    exit_code = 2


class MergeTableError(ExporterError):
    exit_code = 2


class InferenceFailure(ExporterError):
    exit_code = 4


class IoFailure(ExporterError):
    exit_code = 3
