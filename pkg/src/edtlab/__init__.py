"""Executable EDT0L grammars, string transducers, restricted MCFGs and the
decomposition calculus behind the non-EDT0L word problem of ℤ."""

__version__ = "0.1.0"
