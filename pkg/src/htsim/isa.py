"""128-bit task instruction format, assembler and disassembler.

Instruction word layout (bit ranges are inclusive, bit 0 is the LSB):

    [7:0]     opcode      accelerator ID (0x00-0xEF) or control opcode (0xF0-0xF6)
    [23:8]    in_base     input region base block
    [31:24]   in_size     input region size in blocks
    [47:32]   out_base    output region base block
    [55:48]   out_size    output region size in blocks
    [59:56]   task_id     program-level task tag
    [63:60]   proc_id     requesting processor tag
    [67:64]   control     control flags (see below)
    [127:68]  metadata    opaque payload

Control flags:

    bit 0     indirect addressing: in_base/out_base are GPR indices whose
              values give the region bases
    bits 2:1  branch class for ``if``: 00 register (RR), 01 memory (MR),
              10 task result (BR)
    bit 3     side-effect-free task: zero-size regions are allowed

Assembly is one instruction per line::

    mnemonic in_base in_size out_base out_size task_id proc_id control metadata

with all eight fields in unprefixed hex, ``#`` starting a comment.  Task
mnemonics (keynames) resolve through a :class:`KeynameMap`; control
mnemonics are fixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

# (shift, width) per field, LSB-first per the layout table above.
FIELDS = {
    "opcode": (0, 8),
    "in_base": (8, 16),
    "in_size": (24, 8),
    "out_base": (32, 16),
    "out_size": (48, 8),
    "task_id": (56, 4),
    "proc_id": (60, 4),
    "control": (64, 4),
    "metadata": (68, 60),
}

WORD_BITS = 128
WORD_BYTES = WORD_BITS // 8

TASK_OPCODE_MAX = 0xEF

OP_MOV = 0xF0
OP_ADD = 0xF1
OP_MUL = 0xF2
OP_IF = 0xF3
OP_JUMP = 0xF4
OP_LBEG = 0xF5
OP_LEND = 0xF6

CONTROL_OPCODES = {
    "mov": OP_MOV,
    "add": OP_ADD,
    "mul": OP_MUL,
    "if": OP_IF,
    "jump": OP_JUMP,
    "lbeg": OP_LBEG,
    "lend": OP_LEND,
}
CONTROL_NAMES = {code: name for name, code in CONTROL_OPCODES.items()}

CTRL_INDIRECT = 0x1
CTRL_NO_REGIONS = 0x8

BRANCH_RR = 0
BRANCH_MR = 1
BRANCH_BR = 2


def branch_class(control: int) -> int:
    """Branch class encoded in control bits [2:1]."""
    return (control >> 1) & 0b11


class AsmError(ValueError):
    """Assembly or disassembly failure, carrying the 1-based source line."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class UnknownMnemonic(AsmError):
    pass


class WrongFieldCount(AsmError):
    pass


class FieldOutOfRange(AsmError):
    def __init__(self, message: str, line_no: int | None = None, field: str | None = None):
        self.field = field
        super().__init__(message, line_no)


class UnknownAcceleratorId(ValueError):
    pass


@dataclass(frozen=True)
class Instruction:
    """One decoded instruction; field widths are enforced at construction."""

    opcode: int
    in_base: int = 0
    in_size: int = 0
    out_base: int = 0
    out_size: int = 0
    task_id: int = 0
    proc_id: int = 0
    control: int = 0
    metadata: int = 0

    def __post_init__(self):
        for name, (_, width) in FIELDS.items():
            value = getattr(self, name)
            if not 0 <= value < (1 << width):
                raise FieldOutOfRange(
                    f"{name}=0x{value:x} does not fit in {width} bits", field=name
                )
        if self.opcode > TASK_OPCODE_MAX and self.opcode not in CONTROL_NAMES:
            raise FieldOutOfRange(
                f"opcode 0x{self.opcode:02x} is neither a task ID nor a control opcode",
                field="opcode",
            )
        if self.is_task and not self.control & CTRL_NO_REGIONS:
            if self.in_size < 1:
                raise FieldOutOfRange("task requires in_size >= 1", field="in_size")
            if self.out_size < 1:
                raise FieldOutOfRange("task requires out_size >= 1", field="out_size")

    @property
    def is_task(self) -> bool:
        return self.opcode <= TASK_OPCODE_MAX

    @property
    def is_control(self) -> bool:
        return not self.is_task


Program = list[Instruction]


def encode(instr: Instruction) -> int:
    """Pack an instruction into its 128-bit word."""
    word = 0
    for name, (shift, _) in FIELDS.items():
        word |= getattr(instr, name) << shift
    return word


def decode(word: int) -> Instruction:
    """Unpack a 128-bit word; rejects words that encode no well-formed instruction."""
    if not 0 <= word < (1 << WORD_BITS):
        raise FieldOutOfRange(f"word 0x{word:x} does not fit in {WORD_BITS} bits")
    fields = {
        name: (word >> shift) & ((1 << width) - 1)
        for name, (shift, width) in FIELDS.items()
    }
    return Instruction(**fields)


class KeynameMap:
    """Injective map between task keynames and accelerator IDs."""

    def __init__(self, mapping: Mapping[str, int]):
        self._by_name: dict[str, int] = {}
        self._by_id: dict[int, str] = {}
        for name, accel_id in mapping.items():
            if not 0 <= accel_id <= TASK_OPCODE_MAX:
                raise ValueError(f"accelerator ID 0x{accel_id:x} out of task opcode range")
            if accel_id in self._by_id:
                raise ValueError(
                    f"accelerator ID 0x{accel_id:02x} bound to both "
                    f"{self._by_id[accel_id]!r} and {name!r}"
                )
            self._by_name[name] = accel_id
            self._by_id[accel_id] = name

    def id_for(self, name: str) -> int | None:
        return self._by_name.get(name)

    def name_for(self, accel_id: int) -> str:
        try:
            return self._by_id[accel_id]
        except KeyError:
            raise UnknownAcceleratorId(
                f"no keyname for accelerator ID 0x{accel_id:02x}"
            ) from None

    def names(self) -> list[str]:
        return list(self._by_name)


def _coerce_keymap(keymap: KeynameMap | Mapping[str, int]) -> KeynameMap:
    return keymap if isinstance(keymap, KeynameMap) else KeynameMap(keymap)


FIELD_ORDER = (
    "in_base",
    "in_size",
    "out_base",
    "out_size",
    "task_id",
    "proc_id",
    "control",
    "metadata",
)


def assemble(text: str, keymap: KeynameMap | Mapping[str, int]) -> Program:
    """Assemble source text into a program.

    Blank lines and ``#`` comments are ignored.  An empty source assembles
    to an empty program.
    """
    keymap = _coerce_keymap(keymap)
    program: Program = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        mnemonic = tokens[0].lower()
        if mnemonic in CONTROL_OPCODES:
            opcode = CONTROL_OPCODES[mnemonic]
        else:
            accel_id = keymap.id_for(mnemonic)
            if accel_id is None:
                raise UnknownMnemonic(f"unknown mnemonic {mnemonic!r}", line_no)
            opcode = accel_id
        if len(tokens) != 1 + len(FIELD_ORDER):
            raise WrongFieldCount(
                f"expected {len(FIELD_ORDER)} fields after mnemonic, got {len(tokens) - 1}",
                line_no,
            )
        fields = {}
        for name, token in zip(FIELD_ORDER, tokens[1:]):
            try:
                fields[name] = int(token, 16)
            except ValueError:
                raise FieldOutOfRange(
                    f"field {name} is not hex: {token!r}", line_no, field=name
                ) from None
        try:
            program.append(Instruction(opcode=opcode, **fields))
        except FieldOutOfRange as err:
            raise FieldOutOfRange(str(err), line_no, field=err.field) from None
    return program


def format_instruction(instr: Instruction, keymap: KeynameMap | Mapping[str, int]) -> str:
    """Canonical assembly line: lowercase hex fields, metadata zero-padded to 4."""
    keymap = _coerce_keymap(keymap)
    if instr.is_task:
        mnemonic = keymap.name_for(instr.opcode)
    else:
        mnemonic = CONTROL_NAMES[instr.opcode]
    return (
        f"{mnemonic} {instr.in_base:x} {instr.in_size:x} {instr.out_base:x} "
        f"{instr.out_size:x} {instr.task_id:x} {instr.proc_id:x} "
        f"{instr.control:x} {instr.metadata:04x}"
    )


def disassemble(program: Iterable[Instruction], keymap: KeynameMap | Mapping[str, int]) -> str:
    keymap = _coerce_keymap(keymap)
    lines = [format_instruction(instr, keymap) for instr in program]
    return "\n".join(lines) + ("\n" if lines else "")


def to_bytes(program: Iterable[Instruction]) -> bytes:
    """Serialize to a length-prefixed stream of big-endian 128-bit words."""
    words = [encode(instr) for instr in program]
    out = bytearray(len(words).to_bytes(4, "big"))
    for word in words:
        out += word.to_bytes(WORD_BYTES, "big")
    return bytes(out)


def from_bytes(data: bytes) -> Program:
    if len(data) < 4:
        raise ValueError("truncated instruction stream: missing length prefix")
    count = int.from_bytes(data[:4], "big")
    expected = 4 + count * WORD_BYTES
    if len(data) != expected:
        raise ValueError(
            f"instruction stream length {len(data)} does not match "
            f"prefix ({count} words -> {expected} bytes)"
        )
    program: Program = []
    for i in range(count):
        chunk = data[4 + i * WORD_BYTES : 4 + (i + 1) * WORD_BYTES]
        program.append(decode(int.from_bytes(chunk, "big")))
    return program
