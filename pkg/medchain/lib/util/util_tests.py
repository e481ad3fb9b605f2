import unittest
import os
import tempfile
import shutil
from hypothesis import given, strategies as st
import medchain.lib.util.codec as codec
import medchain.lib.util.setupParser as setupParser
import medchain.lib.util.exception as exception

_leaves = st.none() | st.booleans() | st.integers() | st.binary(max_size=64) | st.text(max_size=32)
_values = st.recursive(_leaves, lambda children: st.lists(children, max_size=5), max_leaves=20)


class CodecTest(unittest.TestCase):

    @given(_values)
    def test_decode_is_inverse_and_canonical(self, value):
        data = codec.encode(value)
        decoded = codec.decode(data)
        self.assertEqual(codec.encode(decoded), data)

    def test_tuples_encode_as_lists(self):
        self.assertEqual(codec.encode((1, b'x')), codec.encode([1, b'x']))

    def test_integer_encoding_is_minimal(self):
        self.assertEqual(codec.encode(0), b'\x03\x00\x00\x00\x00')
        self.assertEqual(codec.encode(127), b'\x03\x00\x00\x00\x01\x7f')
        self.assertEqual(codec.encode(128), b'\x03\x00\x00\x00\x02\x00\x80')
        self.assertEqual(codec.encode(-128), b'\x03\x00\x00\x00\x01\x80')
        with self.assertRaises(exception.SerializationException):
            codec.decode(b'\x03\x00\x00\x00\x02\x00\x01')

    def test_rejects_trailing_bytes(self):
        with self.assertRaises(exception.SerializationException):
            codec.decode(codec.encode(b'abc') + b'\x00')

    def test_rejects_truncation(self):
        data = codec.encode([b'abc', 'def'])
        for cut in range(len(data)):
            with self.assertRaises(exception.SerializationException):
                codec.decode(data[:cut])

    def test_element_stays_inside_its_list(self):
        data = bytearray(codec.encode([[b'a'], b'bcdefgh']))
        self.assertEqual(data[10:15], b'\x04\x00\x00\x00\x01')
        data[14] = 5
        with self.assertRaises(exception.SerializationException):
            codec.decode(bytes(data))

    def test_wide_list(self):
        value = [[index, b'x' * (index % 7)] for index in range(20000)]
        self.assertEqual(codec.decode(codec.encode(value)), value)

    def test_rejects_unknown_tag(self):
        with self.assertRaises(exception.SerializationException):
            codec.decode(b'\x7f\x00\x00\x00\x00')

    def test_rejects_maps(self):
        with self.assertRaises(exception.SerializationException):
            codec.encode({'a': 1})


class SetupParserTest(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def _write(self, name, text):
        path = os.path.join(self.tmp, name)
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_line_loader_marks_mappings(self):
        path = self._write('s.yaml', "name: demo\nsteps:\n  - actor: alice\n    op: keygen\n")
        doc = setupParser.load_file(path, setupParser.LineLoader)
        self.assertEqual(doc[setupParser.LINE_KEY], 1)
        self.assertEqual(doc['steps'][0][setupParser.LINE_KEY], 3)
        self.assertEqual(setupParser.strip_lines(doc), {'name': 'demo', 'steps': [{'actor': 'alice', 'op': 'keygen'}]})

    def test_include(self):
        self._write('actors.yaml', "- name: alice\n  role: Patient\n")
        path = self._write('s.yaml', "actors: !include actors.yaml\n")
        doc = setupParser.load_file(path)
        self.assertEqual(doc['actors'], [{'name': 'alice', 'role': 'Patient'}])

    def test_syntax_error_names_line(self):
        path = self._write('bad.yaml', "name: demo\nsteps: [\n  - a\n")
        with self.assertRaises(exception.ScenarioParseException) as ctx:
            setupParser.load_file(path)
        self.assertIsNotNone(ctx.exception.line)
        self.assertIn('line', ctx.exception.message)


class ExceptionTest(unittest.TestCase):

    def test_reason_lookup(self):
        exc = exception.exception_for_reason('ExceedsSupply', 'sold 31 of 30')
        self.assertIsInstance(exc, exception.ExceedsSupplyException)
        self.assertEqual(exc.message, 'sold 31 of 30')

    def test_reason_lookup_for_parametrized_class(self):
        exc = exception.exception_for_reason('UnknownInstance')
        self.assertIsInstance(exc, exception.UnknownInstanceException)

    def test_unknown_reason_falls_back(self):
        exc = exception.exception_for_reason('SomethingNew')
        self.assertIsInstance(exc, exception.ContractException)
        self.assertEqual(exc.reason, 'SomethingNew')


if __name__ == '__main__':
    unittest.main()
