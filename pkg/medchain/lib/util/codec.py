import struct
from medchain.lib.util.exception import SerializationException

TAG_NONE = 0x00
TAG_FALSE = 0x01
TAG_TRUE = 0x02
TAG_INT = 0x03
TAG_BYTES = 0x04
TAG_STR = 0x05
TAG_LIST = 0x06

_LENGTH = struct.Struct('>I')
MAX_DEPTH = 16


def encode(value):
    """Encode ``value`` canonically.

    Every value is a one byte tag followed by a four byte big-endian length and the body. Integers use their minimal
    two's complement form, strings UTF-8, lists (and tuples) the concatenated encodings of their elements. Maps are
    not supported; records are lists in a fixed field order.

    :param value: None, bool, int, bytes, str or a list/tuple of those
    :return: Canonical encoding
    :rtype: bytes
    """
    if value is None:
        return bytes([TAG_NONE]) + _LENGTH.pack(0)
    if value is True:
        return bytes([TAG_TRUE]) + _LENGTH.pack(0)
    if value is False:
        return bytes([TAG_FALSE]) + _LENGTH.pack(0)
    if isinstance(value, int):
        body = _int_to_bytes(value)
        tag = TAG_INT
    elif isinstance(value, (bytes, bytearray)):
        body = bytes(value)
        tag = TAG_BYTES
    elif isinstance(value, str):
        body = value.encode('utf-8')
        tag = TAG_STR
    elif isinstance(value, (list, tuple)):
        body = b''.join(encode(v) for v in value)
        tag = TAG_LIST
    else:
        raise SerializationException("Type '%s' has no canonical encoding" % type(value).__name__)
    return bytes([tag]) + _LENGTH.pack(len(body)) + body


def decode(data):
    """Decode a canonical encoding produced by ``encode``.

    Lists come back as lists. Trailing bytes, truncation, unknown tags and non-minimal integers are rejected so that
    ``encode(decode(data)) == data`` holds for every accepted input.

    :param data: Encoded bytes
    :type data: bytes
    :return: Decoded value
    :raises SerializationException: If ``data`` is not a canonical encoding
    """
    data = bytes(data)
    value, offset = _decode_at(data, 0, len(data), 0)
    if offset != len(data):
        raise SerializationException("%s trailing bytes after value" % (len(data) - offset))
    return value


def _decode_at(data, offset, limit, depth):
    """Decode the value at ``offset``, which must end at or before ``limit``."""
    if depth > MAX_DEPTH:
        raise SerializationException("Nesting deeper than %s" % MAX_DEPTH)
    if offset + 5 > limit:
        raise SerializationException("Truncated header at offset %s" % offset)
    tag = data[offset]
    (length,) = _LENGTH.unpack_from(data, offset + 1)
    start = offset + 5
    end = start + length
    if end > limit:
        raise SerializationException("Truncated body at offset %s" % offset)

    if tag in (TAG_NONE, TAG_FALSE, TAG_TRUE):
        if length:
            raise SerializationException("Constant with body at offset %s" % offset)
        return {TAG_NONE: None, TAG_FALSE: False, TAG_TRUE: True}[tag], end
    if tag == TAG_LIST:
        items = []
        cursor = start
        while cursor < end:
            item, cursor = _decode_at(data, cursor, end, depth + 1)
            items.append(item)
        return items, end
    body = data[start:end]
    if tag == TAG_INT:
        value = int.from_bytes(body, 'big', signed=True)
        if _int_to_bytes(value) != body:
            raise SerializationException("Non-minimal integer at offset %s" % offset)
        return value, end
    if tag == TAG_BYTES:
        return body, end
    if tag == TAG_STR:
        try:
            return body.decode('utf-8'), end
        except UnicodeDecodeError:
            raise SerializationException("Invalid UTF-8 at offset %s" % offset)
    raise SerializationException("Unknown tag 0x%02x at offset %s" % (tag, offset))


def _int_to_bytes(value):
    if value == 0:
        return b''
    length = (value + (value < 0)).bit_length() // 8 + 1
    return value.to_bytes(length, 'big', signed=True)

