"""Subcommands of the occluded-reid command line."""

from . import augment, evaluate, gradcheck, sweep, synth, train

COMMANDS = [synth, augment, train, evaluate, gradcheck, sweep]

__all__ = [
    "COMMANDS",
    "synth",
    "augment",
    "train",
    "evaluate",
    "gradcheck",
    "sweep",
]
