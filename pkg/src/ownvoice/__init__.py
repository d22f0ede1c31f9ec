"""Own-voice transfer path modeling for hearables with an in-ear microphone."""

__version__ = "0.1.0"
