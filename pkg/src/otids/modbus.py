"""Bit-exact Modbus/TCP application data unit codec.

Only the MBAP envelope (transaction id, protocol id, length, unit id) and the
function code are modeled; PDU payloads stay opaque bytes. All multi-byte
integers are big-endian. Exception responses (function code >= 0x80) are
legal frames.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .core import InputError

MBAP_HEADER_LEN = 7
MIN_FRAME_LEN = 8  # MBAP header + function code
MAX_DATA_LEN = 252

FUNCTION_NAMES = {
    1: "ReadCoils",
    2: "ReadDiscreteInputs",
    3: "ReadHoldingRegisters",
    4: "ReadInputRegisters",
    5: "WriteSingleCoil",
    6: "WriteSingleRegister",
    15: "WriteMultipleCoils",
    16: "WriteMultipleRegisters",
    20: "ReadFileRecord",
    21: "WriteFileRecord",
    43: "ReadDeviceIdentification",
}


@dataclass(frozen=True)
class ModbusFrame:
    transaction_id: int
    unit_id: int
    function_code: int
    data: bytes = b""
    protocol_id: int = 0

    def validate(self) -> None:
        if not (0 <= self.transaction_id <= 0xFFFF):
            raise InputError(f"transaction id out of range: {self.transaction_id}")
        if self.protocol_id != 0:
            raise InputError(f"unsupported protocol id: {self.protocol_id}")
        if not (0 <= self.unit_id <= 0xFF):
            raise InputError(f"unit id out of range: {self.unit_id}")
        if not (1 <= self.function_code <= 0xFF):
            raise InputError(f"function code out of range: {self.function_code}")
        if len(self.data) > MAX_DATA_LEN:
            raise InputError(f"data too long: {len(self.data)} bytes (max {MAX_DATA_LEN})")


def encode(frame: ModbusFrame) -> bytes:
    """MBAP header (txn, proto, length = |data| + 2), unit id, fc, data."""
    frame.validate()
    header = struct.pack(
        ">HHHBB",
        frame.transaction_id,
        frame.protocol_id,
        len(frame.data) + 2,
        frame.unit_id,
        frame.function_code,
    )
    return header + frame.data


def decode(raw: bytes) -> ModbusFrame:
    if len(raw) < MIN_FRAME_LEN:
        raise InputError(f"frame too short: {len(raw)} bytes (minimum {MIN_FRAME_LEN})")
    txn, proto, length, unit, fc = struct.unpack(">HHHBB", raw[:8])
    if proto != 0:
        raise InputError(f"unsupported protocol id: {proto}")
    if length != len(raw) - 6:
        raise InputError(f"declared length {length} != actual {len(raw) - 6}")
    frame = ModbusFrame(
        transaction_id=txn,
        unit_id=unit,
        function_code=fc,
        data=raw[8:],
        protocol_id=proto,
    )
    frame.validate()
    return frame


def describe(frame: ModbusFrame) -> str:
    fc = frame.function_code
    return FUNCTION_NAMES.get(fc, f"Unknown({fc})")
