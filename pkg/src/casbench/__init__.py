"""casbench: compile benchmark taskfolders for external solver backends and
run them under time/memory supervision with POSIX time accounting."""

__version__ = "0.1.0"
