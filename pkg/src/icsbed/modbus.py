"""Modbus/TCP codec and server-side register semantics.

Wire format is the standard MBAP header (7 bytes, big-endian) followed by a
PDU. Only the function codes used by the testbed devices are given structured
representations; anything else decodes to an opaque ``RawPdu`` so that
man-in-the-middle rules and fuzz inputs can pass through unharmed.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

# Function codes
READ_COILS = 0x01
READ_DISCRETE_INPUTS = 0x02
READ_HOLDING_REGISTERS = 0x03
READ_INPUT_REGISTERS = 0x04
WRITE_SINGLE_COIL = 0x05
WRITE_SINGLE_REGISTER = 0x06
WRITE_MULTIPLE_COILS = 0x0F
WRITE_MULTIPLE_REGISTERS = 0x10
ENCAP_INTERFACE_TRANSPORT = 0x2B
MEI_READ_DEVICE_ID = 0x0E

# Exception codes
EXC_ILLEGAL_FUNCTION = 0x01
EXC_ILLEGAL_DATA_ADDRESS = 0x02
EXC_ILLEGAL_DATA_VALUE = 0x03

READ_BIT_FUNCTIONS = (READ_COILS, READ_DISCRETE_INPUTS)
READ_WORD_FUNCTIONS = (READ_HOLDING_REGISTERS, READ_INPUT_REGISTERS)

MAX_ADU_LENGTH = 260
MBAP = struct.Struct(">HHHB")


class ModbusError(Exception):
    """Base class for codec and transaction failures."""


class FramingError(ModbusError):
    """Input too short; the caller must wait for more bytes."""


class ProtocolError(ModbusError):
    """Self-contradictory or malformed ADU."""


class EncodingError(ModbusError):
    """PDU cannot be represented on the wire."""


@dataclass(frozen=True)
class MbapHeader:
    transaction_id: int
    unit_id: int = 1
    protocol_id: int = 0
    length: int = 0  # recomputed on encode


@dataclass(frozen=True)
class ReadRequest:
    """Request for 0x01/0x02/0x03/0x04."""

    function_code: int
    address: int
    count: int


def _pad_bits(bits) -> tuple:
    bits = tuple(bool(b) for b in bits)
    if len(bits) % 8:
        bits = bits + (False,) * (8 - len(bits) % 8)
    return bits


@dataclass(frozen=True)
class ReadBitsResponse:
    """Response for 0x01/0x02; bits padded to a whole byte on the wire."""

    function_code: int
    bits: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "bits", _pad_bits(self.bits))


@dataclass(frozen=True)
class ReadWordsResponse:
    function_code: int
    words: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(int(w) for w in self.words))


@dataclass(frozen=True)
class WriteSingleCoil:
    """Request and echo response for 0x05; value is the raw wire word."""

    address: int
    value: int  # 0xFF00 = on, 0x0000 = off; other values are invalid

    @property
    def on(self) -> bool:
        return self.value == 0xFF00

    function_code: int = field(default=WRITE_SINGLE_COIL, init=False)


def coil_value(on: bool) -> int:
    return 0xFF00 if on else 0x0000


@dataclass(frozen=True)
class WriteSingleRegister:
    address: int
    value: int
    function_code: int = field(default=WRITE_SINGLE_REGISTER, init=False)


@dataclass(frozen=True)
class WriteMultipleCoils:
    address: int
    bits: tuple
    function_code: int = field(default=WRITE_MULTIPLE_COILS, init=False)

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))


@dataclass(frozen=True)
class WriteMultipleRegisters:
    address: int
    words: tuple
    function_code: int = field(default=WRITE_MULTIPLE_REGISTERS, init=False)

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(int(w) for w in self.words))


@dataclass(frozen=True)
class WriteAck:
    """Response to 0x0F/0x10: echoes address and quantity."""

    function_code: int
    address: int
    count: int


@dataclass(frozen=True)
class DeviceIdRequest:
    read_code: int = 0x01
    object_id: int = 0x00
    function_code: int = field(default=ENCAP_INTERFACE_TRANSPORT, init=False)


@dataclass(frozen=True)
class DeviceIdResponse:
    """Basic device identification objects: (object id, ascii value)."""

    objects: tuple  # tuple of (int, str)
    function_code: int = field(default=ENCAP_INTERFACE_TRANSPORT, init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "objects", tuple((int(i), str(s)) for i, s in self.objects)
        )


@dataclass(frozen=True)
class ExceptionResponse:
    function_code: int  # original request function code, without the 0x80 bit
    exception_code: int


@dataclass(frozen=True)
class RawPdu:
    """Unknown function code, preserved byte-for-byte."""

    function_code: int
    payload: bytes = b""


@dataclass(frozen=True)
class DeviceIdentity:
    vendor: str = "icsbed"
    product: str = "generic"
    revision: str = "1.0"

    def objects(self) -> tuple:
        return ((0, self.vendor), (1, self.product), (2, self.revision))


def _pack_bits(bits) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        if b:
            out[i // 8] |= 1 << (i % 8)
    return bytes(out)


def _unpack_bits(data: bytes, count: int) -> tuple:
    return tuple(bool(data[i // 8] >> (i % 8) & 1) for i in range(count))


def encode_pdu(pdu) -> bytes:
    if isinstance(pdu, ReadRequest):
        return struct.pack(">BHH", pdu.function_code, pdu.address, pdu.count)
    if isinstance(pdu, ReadBitsResponse):
        data = _pack_bits(pdu.bits)
        return struct.pack(">BB", pdu.function_code, len(data)) + data
    if isinstance(pdu, ReadWordsResponse):
        data = struct.pack(">%dH" % len(pdu.words), *pdu.words)
        return struct.pack(">BB", pdu.function_code, len(data)) + data
    if isinstance(pdu, WriteSingleCoil):
        return struct.pack(">BHH", WRITE_SINGLE_COIL, pdu.address, pdu.value)
    if isinstance(pdu, WriteSingleRegister):
        return struct.pack(">BHH", WRITE_SINGLE_REGISTER, pdu.address, pdu.value)
    if isinstance(pdu, WriteMultipleCoils):
        if len(pdu.bits) > 1968:
            raise EncodingError("too many coils for one write")
        data = _pack_bits(pdu.bits)
        return (
            struct.pack(
                ">BHHB", WRITE_MULTIPLE_COILS, pdu.address, len(pdu.bits), len(data)
            )
            + data
        )
    if isinstance(pdu, WriteMultipleRegisters):
        if len(pdu.words) > 123:
            raise EncodingError("too many registers for one write")
        data = struct.pack(">%dH" % len(pdu.words), *pdu.words)
        return (
            struct.pack(
                ">BHHB",
                WRITE_MULTIPLE_REGISTERS,
                pdu.address,
                len(pdu.words),
                len(data),
            )
            + data
        )
    if isinstance(pdu, WriteAck):
        return struct.pack(">BHH", pdu.function_code, pdu.address, pdu.count)
    if isinstance(pdu, DeviceIdRequest):
        return struct.pack(
            ">BBBB",
            ENCAP_INTERFACE_TRANSPORT,
            MEI_READ_DEVICE_ID,
            pdu.read_code,
            pdu.object_id,
        )
    if isinstance(pdu, DeviceIdResponse):
        head = struct.pack(
            ">BBBBBBB",
            ENCAP_INTERFACE_TRANSPORT,
            MEI_READ_DEVICE_ID,
            0x01,  # read device id code: basic
            0x01,  # conformity level
            0x00,  # no more follows
            0x00,  # next object id
            len(pdu.objects),
        )
        body = b""
        for oid, value in pdu.objects:
            raw = value.encode("ascii")
            body += struct.pack(">BB", oid, len(raw)) + raw
        return head + body
    if isinstance(pdu, ExceptionResponse):
        return struct.pack(">BB", pdu.function_code | 0x80, pdu.exception_code)
    if isinstance(pdu, RawPdu):
        return bytes([pdu.function_code]) + pdu.payload
    raise EncodingError(f"not a PDU: {pdu!r}")


def decode_pdu(data: bytes, direction: str = "request"):
    """Decode a PDU body. ``direction`` disambiguates shared function codes."""
    if not data:
        raise ProtocolError("empty PDU")
    fc = data[0]
    body = data[1:]
    try:
        if fc & 0x80:
            if len(body) != 1:
                raise ProtocolError("bad exception PDU length")
            return ExceptionResponse(fc & 0x7F, body[0])
        if fc in READ_BIT_FUNCTIONS:
            if direction == "request":
                addr, count = struct.unpack(">HH", body)
                return ReadRequest(fc, addr, count)
            nbytes = body[0]
            if len(body) != 1 + nbytes:
                raise ProtocolError("bit response byte count mismatch")
            return ReadBitsResponse(fc, _unpack_bits(body[1:], nbytes * 8))
        if fc in READ_WORD_FUNCTIONS:
            if direction == "request":
                addr, count = struct.unpack(">HH", body)
                return ReadRequest(fc, addr, count)
            nbytes = body[0]
            if len(body) != 1 + nbytes or nbytes % 2:
                raise ProtocolError("word response byte count mismatch")
            return ReadWordsResponse(fc, struct.unpack(">%dH" % (nbytes // 2), body[1:]))
        if fc == WRITE_SINGLE_COIL:
            addr, value = struct.unpack(">HH", body)
            return WriteSingleCoil(addr, value)
        if fc == WRITE_SINGLE_REGISTER:
            addr, value = struct.unpack(">HH", body)
            return WriteSingleRegister(addr, value)
        if fc == WRITE_MULTIPLE_COILS:
            if direction == "response":
                addr, count = struct.unpack(">HH", body)
                return WriteAck(fc, addr, count)
            addr, count, nbytes = struct.unpack(">HHB", body[:5])
            if len(body) != 5 + nbytes or nbytes != (count + 7) // 8:
                raise ProtocolError("coil write byte count mismatch")
            return WriteMultipleCoils(addr, _unpack_bits(body[5:], count))
        if fc == WRITE_MULTIPLE_REGISTERS:
            if direction == "response":
                addr, count = struct.unpack(">HH", body)
                return WriteAck(fc, addr, count)
            addr, count, nbytes = struct.unpack(">HHB", body[:5])
            if len(body) != 5 + nbytes or nbytes != count * 2:
                raise ProtocolError("register write byte count mismatch")
            return WriteMultipleRegisters(addr, struct.unpack(">%dH" % count, body[5:]))
        if fc == ENCAP_INTERFACE_TRANSPORT and body[:1] == bytes([MEI_READ_DEVICE_ID]):
            if direction == "request":
                if len(body) != 3:
                    raise ProtocolError("bad device id request")
                return DeviceIdRequest(body[1], body[2])
            nobj = body[5]
            objects = []
            pos = 6
            for _ in range(nobj):
                oid, olen = body[pos], body[pos + 1]
                objects.append((oid, body[pos + 2 : pos + 2 + olen].decode("ascii")))
                pos += 2 + olen
            if pos != len(body):
                raise ProtocolError("trailing bytes in device id response")
            return DeviceIdResponse(tuple(objects))
    except struct.error as exc:
        raise ProtocolError(f"malformed PDU for function 0x{fc:02x}") from exc
    except IndexError as exc:
        raise ProtocolError(f"truncated PDU for function 0x{fc:02x}") from exc
    return RawPdu(fc, bytes(body))


def encode_adu(header: MbapHeader, pdu) -> bytes:
    """Encode header + PDU; the MBAP length field is always recomputed."""
    body = encode_pdu(pdu)
    length = len(body) + 1  # unit id + pdu
    if 7 + len(body) > MAX_ADU_LENGTH:
        raise EncodingError(f"ADU would be {7 + len(body)} bytes (max {MAX_ADU_LENGTH})")
    if not 0 <= header.transaction_id <= 0xFFFF:
        raise EncodingError("transaction id out of range")
    if header.protocol_id != 0:
        raise EncodingError("protocol id must be 0")
    return (
        MBAP.pack(header.transaction_id, header.protocol_id, length, header.unit_id)
        + body
    )


def decode_adu(data: bytes, direction: str = "request"):
    """Decode one ADU. Raises FramingError when more bytes are needed."""
    if len(data) < 7:
        raise FramingError("incomplete header")
    tid, pid, length, unit = MBAP.unpack(data[:7])
    if pid != 0:
        raise ProtocolError(f"protocol id {pid} != 0")
    if not 2 <= length <= 254:
        raise ProtocolError(f"length field {length} outside 2..254")
    if len(data) < 6 + length:
        raise FramingError("incomplete PDU")
    if len(data) > 6 + length:
        raise ProtocolError("trailing bytes after ADU")
    header = MbapHeader(tid, unit, pid, length)
    return header, decode_pdu(data[7 : 6 + length], direction)


class RegisterBank:
    """Per-device Modbus-visible state. Sizes are fixed at construction."""

    def __init__(
        self,
        coils: int = 0,
        discrete_inputs: int = 0,
        holding_registers: int = 0,
        input_registers: int = 0,
        identity: DeviceIdentity | None = None,
        supported_functions=None,
    ):
        self.coils = [False] * coils
        self.discrete_inputs = [False] * discrete_inputs
        self.holding_registers = [0] * holding_registers
        self.input_registers = [0] * input_registers
        self.identity = identity or DeviceIdentity()
        # None means "everything this codec knows about"
        self.supported_functions = (
            frozenset(supported_functions) if supported_functions is not None else None
        )

    def _supports(self, fc: int) -> bool:
        if self.supported_functions is None:
            return fc in {
                READ_COILS,
                READ_DISCRETE_INPUTS,
                READ_HOLDING_REGISTERS,
                READ_INPUT_REGISTERS,
                WRITE_SINGLE_COIL,
                WRITE_SINGLE_REGISTER,
                WRITE_MULTIPLE_COILS,
                WRITE_MULTIPLE_REGISTERS,
                ENCAP_INTERFACE_TRANSPORT,
            }
        return fc in self.supported_functions


def execute_request(bank: RegisterBank, pdu):
    """Run a request against a bank, returning the response PDU.

    Read variants never mutate the bank; every malformed-but-decodable
    request yields an exception response.
    """
    fc = getattr(pdu, "function_code", None)
    if fc is None or not bank._supports(fc):
        return ExceptionResponse(fc if fc is not None else 0, EXC_ILLEGAL_FUNCTION)

    if isinstance(pdu, ReadRequest):
        if fc in READ_BIT_FUNCTIONS:
            table = bank.coils if fc == READ_COILS else bank.discrete_inputs
            if not 1 <= pdu.count <= 2000:
                return ExceptionResponse(fc, EXC_ILLEGAL_DATA_VALUE)
            if pdu.address + pdu.count > len(table):
                return ExceptionResponse(fc, EXC_ILLEGAL_DATA_ADDRESS)
            return ReadBitsResponse(fc, table[pdu.address : pdu.address + pdu.count])
        table = (
            bank.holding_registers
            if fc == READ_HOLDING_REGISTERS
            else bank.input_registers
        )
        if not 1 <= pdu.count <= 125:
            return ExceptionResponse(fc, EXC_ILLEGAL_DATA_VALUE)
        if pdu.address + pdu.count > len(table):
            return ExceptionResponse(fc, EXC_ILLEGAL_DATA_ADDRESS)
        return ReadWordsResponse(fc, table[pdu.address : pdu.address + pdu.count])

    if isinstance(pdu, WriteSingleCoil):
        if pdu.value not in (0x0000, 0xFF00):
            return ExceptionResponse(fc, EXC_ILLEGAL_DATA_VALUE)
        if pdu.address >= len(bank.coils):
            return ExceptionResponse(fc, EXC_ILLEGAL_DATA_ADDRESS)
        bank.coils[pdu.address] = pdu.on
        return pdu

    if isinstance(pdu, WriteSingleRegister):
        if not 0 <= pdu.value <= 0xFFFF:
            return ExceptionResponse(fc, EXC_ILLEGAL_DATA_VALUE)
        if pdu.address >= len(bank.holding_registers):
            return ExceptionResponse(fc, EXC_ILLEGAL_DATA_ADDRESS)
        bank.holding_registers[pdu.address] = pdu.value
        return pdu

    if isinstance(pdu, WriteMultipleCoils):
        if not 1 <= len(pdu.bits) <= 1968:
            return ExceptionResponse(fc, EXC_ILLEGAL_DATA_VALUE)
        if pdu.address + len(pdu.bits) > len(bank.coils):
            return ExceptionResponse(fc, EXC_ILLEGAL_DATA_ADDRESS)
        for i, b in enumerate(pdu.bits):
            bank.coils[pdu.address + i] = b
        return WriteAck(fc, pdu.address, len(pdu.bits))

    if isinstance(pdu, WriteMultipleRegisters):
        if not 1 <= len(pdu.words) <= 123:
            return ExceptionResponse(fc, EXC_ILLEGAL_DATA_VALUE)
        if any(not 0 <= w <= 0xFFFF for w in pdu.words):
            return ExceptionResponse(fc, EXC_ILLEGAL_DATA_VALUE)
        if pdu.address + len(pdu.words) > len(bank.holding_registers):
            return ExceptionResponse(fc, EXC_ILLEGAL_DATA_ADDRESS)
        for i, w in enumerate(pdu.words):
            bank.holding_registers[pdu.address + i] = w
        return WriteAck(fc, pdu.address, len(pdu.words))

    if isinstance(pdu, DeviceIdRequest):
        return DeviceIdResponse(bank.identity.objects())

    return ExceptionResponse(fc, EXC_ILLEGAL_FUNCTION)
