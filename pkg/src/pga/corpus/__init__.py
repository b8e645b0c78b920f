"""Shipped example programs, each with a seed input (``<name>.bin``)."""

from __future__ import annotations

from importlib import resources

from ..ir import ProgramIR, load_program

NAMES = (
    "fig6a", "fig6b", "mul_mask", "three_source", "magic_byte",
    "bitfield", "checksum", "memops", "table_lookup", "float_scale",
)


def source(name: str) -> str:
    return resources.files(__name__).joinpath(f"{name}.ir").read_text()


def seed(name: str) -> bytes:
    return resources.files(__name__).joinpath(f"{name}.bin").read_bytes()


def load(name: str) -> tuple[ProgramIR, bytes]:
    return load_program(source(name)), seed(name)
