from typing import Any, Dict, List, Tuple
from json import dumps, loads, JSONDecodeError
from pathlib import Path
from struct import pack, unpack
import os

import numpy as np

MAGIC = b"AENC"
FORMAT_VERSION = 1
DTYPE = np.dtype("<f8")


class CodecError(Exception):
    """Custom exception for binary file format errors."""

    pass


class BinaryCodec:
    """
    Reads and writes the shared binary container: a 4-byte magic, a 4-byte
    little-endian header length, a UTF-8 JSON header, then row-major
    little-endian float64 blocks in the order listed by the header.
    """

    def __init__(self, kind: str):
        """
        Initialize the codec for one artifact kind.

        Args:
            kind: Artifact kind stored in (and checked against) the header.
        """
        self.kind = kind

    def encode(self, header: Dict[str, Any], blocks: Dict[str, np.ndarray]) -> bytes:
        """
        Serialize a header and named float blocks into bytes.

        Args:
            header: JSON-serializable metadata.
            blocks: Ordered mapping of block name to array.

        Returns:
            The encoded file content.

        Raises:
            CodecError: If the header is not serializable or a block is not finite-castable.
        """
        layout: List[Dict[str, Any]] = []
        payload = bytearray()
        for name, values in blocks.items():
            array = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
            layout.append({"name": name, "shape": list(array.shape)})
            payload += array.astype(DTYPE, copy=False).tobytes(order="C")

        full_header = dict(header)
        full_header.update(
            {
                "kind": self.kind,
                "format_version": FORMAT_VERSION,
                "endianness": "little",
                "dtype": "float64",
                "blocks": layout,
            }
        )
        try:
            header_bytes = dumps(full_header, sort_keys=True).encode("utf-8")
        except (TypeError, ValueError) as e:
            raise CodecError(f"Header is not JSON serializable: {e}") from e

        return MAGIC + pack("<I", len(header_bytes)) + header_bytes + bytes(payload)

    def decode(self, content: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
        """
        Parse bytes produced by encode.

        Args:
            content: Raw file content.

        Returns:
            Tuple of (header, blocks).

        Raises:
            CodecError: On a bad magic, unknown version, kind mismatch or a
                payload whose size disagrees with the header.
        """
        if len(content) < 8 or content[:4] != MAGIC:
            raise CodecError("Not an attrib-encode binary file (bad magic)")

        (header_len,) = unpack("<I", content[4:8])
        if len(content) < 8 + header_len:
            raise CodecError("Truncated header")

        try:
            header = loads(content[8 : 8 + header_len].decode("utf-8"))
        except (UnicodeDecodeError, JSONDecodeError) as e:
            raise CodecError(f"Malformed header: {e}") from e

        if header.get("format_version") != FORMAT_VERSION:
            raise CodecError(f"Unsupported format version: {header.get('format_version')}")
        if header.get("kind") != self.kind:
            raise CodecError(f"Expected a '{self.kind}' file, found '{header.get('kind')}'")

        payload = memoryview(content)[8 + header_len :]
        expected = sum(int(np.prod(b["shape"], dtype=np.int64)) for b in header["blocks"]) * 8
        if len(payload) != expected:
            raise CodecError(
                f"Payload size {len(payload)} does not match header ({expected} bytes expected)"
            )

        blocks: Dict[str, np.ndarray] = {}
        offset = 0
        for block in header["blocks"]:
            shape = tuple(block["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            values = np.frombuffer(payload, dtype=DTYPE, count=count, offset=offset)
            blocks[block["name"]] = values.astype(np.float64).reshape(shape)
            offset += count * 8
        return header, blocks

    def write(self, path: str | Path, header: Dict[str, Any], blocks: Dict[str, np.ndarray]) -> None:
        """
        Atomically write a file (temporary sibling, then rename).

        Raises:
            CodecError: If encoding or the filesystem operation fails.
        """
        path = Path(path)
        content = self.encode(header, blocks)
        tmp_path = path.with_name(f".{path.name}.tmp")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp_path.write_bytes(content)
            os.replace(tmp_path, path)
        except OSError as e:
            tmp_path.unlink(missing_ok=True)
            raise CodecError(f"Failed to write {path}: {e}") from e

    def read(self, path: str | Path) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
        """
        Read and decode a file.

        Raises:
            CodecError: If the file cannot be read or is malformed.
        """
        try:
            content = Path(path).read_bytes()
        except OSError as e:
            raise CodecError(f"Failed to read {path}: {e}") from e
        return self.decode(content)
