"""Codec round-trips, framing errors, and register bank semantics."""
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icsbed import modbus


def roundtrip(pdu, direction):
    header = modbus.MbapHeader(transaction_id=7)
    data = modbus.encode_adu(header, pdu)
    got_header, got_pdu = modbus.decode_adu(data, direction)
    assert got_header.transaction_id == 7
    assert got_header.unit_id == 1
    return got_pdu


def test_known_wire_bytes():
    # tid=1, unit=1, read holding registers addr=0 count=1
    data = modbus.encode_adu(
        modbus.MbapHeader(1), modbus.ReadRequest(modbus.READ_HOLDING_REGISTERS, 0, 1)
    )
    assert data.hex() == "000100000006010300000001"


def test_read_request_roundtrip():
    pdu = modbus.ReadRequest(modbus.READ_COILS, 3, 5)
    assert roundtrip(pdu, "request") == pdu


def test_write_single_coil_shared_code():
    # 0x05 echoes the request; both directions decode to the same type
    pdu = modbus.WriteSingleCoil(2, modbus.coil_value(True))
    assert roundtrip(pdu, "request") == pdu
    assert roundtrip(pdu, "response") == pdu
    assert pdu.on


def test_bits_response_pads_to_byte():
    pdu = modbus.ReadBitsResponse(modbus.READ_COILS, (True, False, True))
    assert len(pdu.bits) == 8
    assert roundtrip(pdu, "response") == pdu


def test_exception_response_roundtrip():
    pdu = modbus.ExceptionResponse(modbus.READ_COILS, modbus.EXC_ILLEGAL_DATA_ADDRESS)
    data = modbus.encode_pdu(pdu)
    assert data[0] == 0x81
    assert modbus.decode_pdu(data, "response") == pdu


def test_device_id_roundtrip():
    req = modbus.DeviceIdRequest()
    assert roundtrip(req, "request") == req
    resp = modbus.DeviceIdResponse(((0, "icsbed"), (1, "soft-plc"), (2, "1.0")))
    assert roundtrip(resp, "response") == resp


def test_unknown_function_code_preserved():
    pdu = modbus.RawPdu(0x42, b"\x01\x02")
    assert roundtrip(pdu, "request") == pdu


def test_framing_short_header():
    with pytest.raises(modbus.FramingError):
        modbus.decode_adu(b"\x00\x01\x00")


def test_framing_incomplete_pdu():
    data = modbus.encode_adu(
        modbus.MbapHeader(1), modbus.ReadRequest(modbus.READ_COILS, 0, 1)
    )
    with pytest.raises(modbus.FramingError):
        modbus.decode_adu(data[:-2])


def test_protocol_id_rejected():
    data = bytearray(
        modbus.encode_adu(
            modbus.MbapHeader(1), modbus.ReadRequest(modbus.READ_COILS, 0, 1)
        )
    )
    data[2] = 1  # protocol id high byte
    with pytest.raises(modbus.ProtocolError):
        modbus.decode_adu(bytes(data))


def test_length_field_bounds():
    bad = modbus.MBAP.pack(1, 0, 1, 1)
    with pytest.raises(modbus.ProtocolError):
        modbus.decode_adu(bad)
    bad = modbus.MBAP.pack(1, 0, 255, 1) + b"\x00" * 254
    with pytest.raises(modbus.ProtocolError):
        modbus.decode_adu(bad)


def test_trailing_bytes_rejected():
    data = modbus.encode_adu(
        modbus.MbapHeader(1), modbus.ReadRequest(modbus.READ_COILS, 0, 1)
    )
    with pytest.raises(modbus.ProtocolError):
        modbus.decode_adu(data + b"\x00")


def test_oversize_adu_rejected():
    with pytest.raises(modbus.EncodingError):
        modbus.encode_adu(
            modbus.MbapHeader(1),
            modbus.WriteMultipleRegisters(0, tuple(range(130))),
        )


# -- property tests ---------------------------------------------------------

bit_fc = st.sampled_from(modbus.READ_BIT_FUNCTIONS)
word_fc = st.sampled_from(modbus.READ_WORD_FUNCTIONS)
addr = st.integers(0, 0xFFFF)
word = st.integers(0, 0xFFFF)


@given(fc=st.sampled_from(modbus.READ_BIT_FUNCTIONS + modbus.READ_WORD_FUNCTIONS),
       address=addr, count=st.integers(1, 125))
def test_prop_read_request_roundtrip(fc, address, count):
    pdu = modbus.ReadRequest(fc, address, count)
    assert roundtrip(pdu, "request") == pdu


@given(fc=bit_fc, bits=st.lists(st.booleans(), min_size=0, max_size=256))
def test_prop_bits_response_roundtrip(fc, bits):
    pdu = modbus.ReadBitsResponse(fc, bits)
    assert roundtrip(pdu, "response") == pdu


@given(fc=word_fc, words=st.lists(word, min_size=0, max_size=125))
def test_prop_words_response_roundtrip(fc, words):
    pdu = modbus.ReadWordsResponse(fc, words)
    assert roundtrip(pdu, "response") == pdu


@given(address=addr, bits=st.lists(st.booleans(), min_size=1, max_size=255))
def test_prop_write_coils_roundtrip(address, bits):
    pdu = modbus.WriteMultipleCoils(address, bits)
    assert roundtrip(pdu, "request") == pdu


@given(address=addr, words=st.lists(word, min_size=1, max_size=123))
def test_prop_write_registers_roundtrip(address, words):
    pdu = modbus.WriteMultipleRegisters(address, words)
    assert roundtrip(pdu, "request") == pdu


@given(data=st.binary(min_size=0, max_size=300))
@settings(max_examples=500)
def test_prop_decode_never_crashes(data):
    for direction in ("request", "response"):
        try:
            modbus.decode_adu(data, direction)
        except modbus.ModbusError:
            pass


def test_bulk_roundtrip_10k():
    """At least 10^4 randomized decode(encode(x)) identity cases."""
    rng = random.Random(12345)
    checked = 0
    while checked < 10_000:
        kind = rng.randrange(6)
        if kind == 0:
            pdu = modbus.ReadRequest(
                rng.choice(modbus.READ_BIT_FUNCTIONS + modbus.READ_WORD_FUNCTIONS),
                rng.randrange(0x10000), rng.randrange(1, 126),
            )
            direction = "request"
        elif kind == 1:
            pdu = modbus.ReadBitsResponse(
                rng.choice(modbus.READ_BIT_FUNCTIONS),
                [rng.random() < 0.5 for _ in range(rng.randrange(0, 64))],
            )
            direction = "response"
        elif kind == 2:
            pdu = modbus.ReadWordsResponse(
                rng.choice(modbus.READ_WORD_FUNCTIONS),
                [rng.randrange(0x10000) for _ in range(rng.randrange(0, 100))],
            )
            direction = "response"
        elif kind == 3:
            pdu = modbus.WriteSingleCoil(
                rng.randrange(0x10000), modbus.coil_value(rng.random() < 0.5)
            )
            direction = rng.choice(("request", "response"))
        elif kind == 4:
            pdu = modbus.WriteMultipleCoils(
                rng.randrange(0x10000),
                [rng.random() < 0.5 for _ in range(rng.randrange(1, 64))],
            )
            direction = "request"
        else:
            pdu = modbus.WriteSingleRegister(rng.randrange(0x10000), rng.randrange(0x10000))
            direction = rng.choice(("request", "response"))
        assert roundtrip(pdu, direction) == pdu
        checked += 1
    assert checked >= 10_000


# -- register bank semantics ---------------------------------------------------

@pytest.fixture
def bank():
    return modbus.RegisterBank(coils=8, discrete_inputs=4, holding_registers=5)


def test_read_coils(bank):
    bank.coils[1] = True
    resp = modbus.execute_request(bank, modbus.ReadRequest(modbus.READ_COILS, 0, 8))
    assert resp.bits[:8] == (False, True, False, False, False, False, False, False)


def test_reads_are_pure(bank):
    before = (list(bank.coils), list(bank.holding_registers))
    modbus.execute_request(bank, modbus.ReadRequest(modbus.READ_COILS, 0, 8))
    modbus.execute_request(bank, modbus.ReadRequest(modbus.READ_HOLDING_REGISTERS, 0, 5))
    assert (list(bank.coils), list(bank.holding_registers)) == before


def test_out_of_range_read(bank):
    resp = modbus.execute_request(bank, modbus.ReadRequest(modbus.READ_COILS, 6, 5))
    assert isinstance(resp, modbus.ExceptionResponse)
    assert resp.exception_code == modbus.EXC_ILLEGAL_DATA_ADDRESS


def test_bad_count_read(bank):
    resp = modbus.execute_request(bank, modbus.ReadRequest(modbus.READ_COILS, 0, 0))
    assert resp.exception_code == modbus.EXC_ILLEGAL_DATA_VALUE
    resp = modbus.execute_request(bank, modbus.ReadRequest(modbus.READ_COILS, 0, 2001))
    assert resp.exception_code == modbus.EXC_ILLEGAL_DATA_VALUE


def test_write_single_coil_applies(bank):
    resp = modbus.execute_request(bank, modbus.WriteSingleCoil(3, 0xFF00))
    assert resp == modbus.WriteSingleCoil(3, 0xFF00)
    assert bank.coils[3] is True


def test_write_coil_bad_value(bank):
    resp = modbus.execute_request(bank, modbus.WriteSingleCoil(3, 0x1234))
    assert resp.exception_code == modbus.EXC_ILLEGAL_DATA_VALUE
    assert bank.coils[3] is False


def test_write_multiple_coils(bank):
    resp = modbus.execute_request(bank, modbus.WriteMultipleCoils(2, (True, True)))
    assert resp == modbus.WriteAck(modbus.WRITE_MULTIPLE_COILS, 2, 2)
    assert bank.coils[2:4] == [True, True]


def test_unsupported_function_rejected():
    bank = modbus.RegisterBank(
        coils=8, holding_registers=5,
        supported_functions={modbus.READ_COILS},
    )
    resp = modbus.execute_request(bank, modbus.WriteSingleRegister(0, 1))
    assert isinstance(resp, modbus.ExceptionResponse)
    assert resp.exception_code == modbus.EXC_ILLEGAL_FUNCTION
    assert bank.holding_registers[0] == 0


def test_device_id_served(bank):
    resp = modbus.execute_request(bank, modbus.DeviceIdRequest())
    assert isinstance(resp, modbus.DeviceIdResponse)
    assert resp.objects[0] == (0, "icsbed")
