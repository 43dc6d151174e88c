"""Little-endian binary serialisation of named parameter tensors.

Layout: the 5-byte magic ``CTAK1`` followed by one record per parameter,
read until end of file::

    <u4 name length> <utf-8 name> <u4 rank> <u8 dim> * rank <f8 value> * prod(dims)
"""
import logging
import os
from typing import Dict, Mapping, Union

import numpy as np

from ctanet.core.errors import ConfigurationError, DataFormatError
from ctanet.core.numerics import Parameterized, Tensor


logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"CTAK1"
_U4 = np.dtype('<u4')
_U8 = np.dtype('<u8')
_F8 = np.dtype('<f8')


def save_checkpoint(params: Mapping[str, Union[Tensor, np.ndarray]], path: str) -> str:
    """Write parameters to ``path`` in insertion order.

    Parameters
    ----------
    params : Mapping[str, Tensor or np.ndarray]
        Parameter name to values.
    path : str
        Destination file; parent directories are created.

    Returns
    -------
    str
        The path written.
    """
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    chunks = [CHECKPOINT_MAGIC]
    for name, value in params.items():
        data = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        encoded = name.encode('utf-8')
        chunks.append(np.array([len(encoded)], dtype=_U4).tobytes())
        chunks.append(encoded)
        chunks.append(np.array([data.ndim], dtype=_U4).tobytes())
        chunks.append(np.array(data.shape, dtype=_U8).tobytes())
        chunks.append(np.ascontiguousarray(data, dtype=_F8).tobytes())
    with open(path, 'wb') as f:
        f.write(b''.join(chunks))
    logger.debug(f"wrote {len(params)} parameters to {path}")
    return path


def _take(buffer: bytes, offset: int, count: int, path: str, what: str) -> bytes:
    end = offset + count
    if end > len(buffer):
        raise DataFormatError(f"{path}: truncated checkpoint while reading {what}")
    return buffer[offset:end]


def read_checkpoint(path: str) -> Dict[str, np.ndarray]:
    """Read every record of a checkpoint file.

    Raises
    ------
    DataFormatError
        On a bad magic or a truncated record; the message names the file.
    """
    with open(path, 'rb') as f:
        buffer = f.read()
    if buffer[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: bad magic, expected {CHECKPOINT_MAGIC!r}")
    offset = len(CHECKPOINT_MAGIC)
    params: Dict[str, np.ndarray] = {}
    while offset < len(buffer):
        (name_len,) = np.frombuffer(_take(buffer, offset, 4, path, 'name length'), dtype=_U4)
        offset += 4
        name = _take(buffer, offset, int(name_len), path, 'name').decode('utf-8')
        offset += int(name_len)
        (rank,) = np.frombuffer(_take(buffer, offset, 4, path, f"rank of {name}"), dtype=_U4)
        offset += 4
        dims = np.frombuffer(_take(buffer, offset, 8 * int(rank), path, f"dims of {name}"), dtype=_U8)
        offset += 8 * int(rank)
        count = int(np.prod(dims)) if rank else 1
        payload = np.frombuffer(_take(buffer, offset, 8 * count, path, f"values of {name}"), dtype=_F8)
        offset += 8 * count
        params[name] = payload.reshape(tuple(int(d) for d in dims)).astype(np.float64)
    return params


def load_parameters(model: Parameterized, path: str) -> Parameterized:
    """Copy checkpoint values into ``model`` in place.

    Raises
    ------
    ConfigurationError
        If the checkpoint and the model disagree on parameter names or shapes;
        the message names the first mismatched parameter.
    """
    stored = read_checkpoint(path)
    expected = model.named_parameters()
    for name, tensor in expected.items():
        if name not in stored:
            raise ConfigurationError(f"checkpoint {path} does not match the architecture: missing parameter '{name}'")
        if stored[name].shape != tensor.shape:
            raise ConfigurationError(f"checkpoint {path} does not match the architecture: parameter '{name}' has "
                                     f"shape {stored[name].shape}, model expects {tensor.shape}")
    extra = [name for name in stored if name not in expected]
    if extra:
        raise ConfigurationError(f"checkpoint {path} does not match the architecture: "
                                 f"unexpected parameter '{extra[0]}'")
    for name, tensor in expected.items():
        tensor.data[...] = stored[name]
    logger.info(f"loaded {len(expected)} parameters from {path}")
    return model
