"""Techniques de réduction d'énergie et de mémoire des CNN.

Transformations exécutables: quantification, élagage par magnitude, codage
des plages de zéros (RLC). Le flot de données optimisé n'existe que comme
multiplicateur d'énergie (voir utils.energy).
"""
import logging
import math
import struct
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from models.errors import DecodeError, TechniqueError
from models.technique_models import (
    PruningSpec,
    QuantizationSpec,
    QuantizedTensor,
    RlcStream,
    RlcToken,
    TechniqueSet,
)
from models.tensor_models import WeightSet

logger = logging.getLogger(__name__)

RUN_BITS = 5
VALUE_BITS = 16
TOKEN_BITS = RUN_BITS + VALUE_BITS
MAX_RUN = (1 << RUN_BITS) - 1
HEADER_BYTES = 16
HEADER_BITS = 8 * HEADER_BYTES
RLC_MAGIC = b"RLC1"
FLAG_TERMINAL = 0x1
TOKENS_PER_GROUP = 8
# index relatif des poids élagués, cohérent avec le champ run des jetons
INDEX_BITS = RUN_BITS


class PruningResult(BaseModel):
    weights: WeightSet
    kept: int
    density_achieved: float


# ---------------------------------------------------------------------------
# Quantification
# ---------------------------------------------------------------------------

def quantize(values: Union[np.ndarray, Sequence[float]], spec: QuantizationSpec,
             source_bits: int = 16) -> QuantizedTensor:
    x = np.asarray(values, dtype=np.float64)
    if spec.bits > source_bits:
        raise TechniqueError(f"cannot quantize {source_bits}-bit data to {spec.bits} bits")
    if spec.bits == source_bits:
        return QuantizedTensor(codes=x.copy(), values=x.copy(), bits=spec.bits, mode=spec.mode)

    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak == 0.0:
        zeros = np.zeros(x.shape)
        return QuantizedTensor(codes=zeros.astype(np.int64), values=zeros, bits=spec.bits, mode=spec.mode)

    if spec.mode == "uniform":
        levels = 1 << spec.bits
        step = 2 * peak / (levels - 1)
        index = np.clip(np.rint((x + peak) / step), 0, levels - 1)
        reconstructed = -peak + index * step
        codes = index.astype(np.int64) - (levels >> 1)
    else:
        step = 0.0
        exponents = max(1, (1 << (spec.bits - 1)) - 1)
        e_max = round(math.log2(peak))
        e_min = e_max - exponents + 1
        magnitude = np.abs(x)
        with np.errstate(divide="ignore"):
            e = np.clip(np.rint(np.log2(np.where(magnitude > 0, magnitude, 1.0))), e_min, e_max)
        keep = magnitude >= 2.0 ** (e_min - 1)
        reconstructed = np.where(keep, np.sign(x) * np.exp2(e), 0.0)
        codes = np.where(keep, np.sign(x) * (e - e_min + 1), 0).astype(np.int64)

    error = float(np.max(np.abs(x - reconstructed)))
    return QuantizedTensor(codes=codes, values=reconstructed, bits=spec.bits, mode=spec.mode,
                           step=step, max_abs_error=error)


# ---------------------------------------------------------------------------
# Élagage
# ---------------------------------------------------------------------------

def prune_array(flat: np.ndarray, density: float) -> np.ndarray:
    """Garde les ceil(density*N) plus grandes magnitudes, égalités vers l'indice le plus petit"""
    flat = np.asarray(flat).ravel()
    keep = min(flat.size, math.ceil(density * flat.size))
    order = np.argsort(-np.abs(flat), kind="stable")[:keep]
    pruned = np.zeros_like(flat)
    pruned[order] = flat[order]
    return pruned


def prune_by_magnitude(weights: WeightSet, spec: PruningSpec) -> PruningResult:
    flat = weights.flat()
    pruned = weights.with_flat(prune_array(flat, spec.target_density))
    total = flat.size
    nonzeros = pruned.nonzero_count
    logger.info(f"Élagage {weights.architecture}: {nonzeros}/{total} poids conservés")
    return PruningResult(weights=pruned, kept=nonzeros, density_achieved=nonzeros / total if total else 0.0)


# ---------------------------------------------------------------------------
# Codage des plages de zéros
# ---------------------------------------------------------------------------

def _check_samples(samples: Union[np.ndarray, Sequence[int]]) -> np.ndarray:
    array = np.asarray(samples).ravel()
    if array.size and not np.issubdtype(array.dtype, np.integer):
        if not np.all(np.equal(np.mod(array, 1), 0)):
            raise TechniqueError("run-length coding takes integer samples")
    array = array.astype(np.int64)
    if array.size and (array.min() < -(1 << 15) or array.max() > (1 << 15) - 1):
        raise TechniqueError("samples must fit in 16 bits")
    return array


def rlc_encode(samples: Union[np.ndarray, Sequence[int]]) -> RlcStream:
    """Parcours glouton: une plage de 32 zéros produit un jeton de remplissage (31, 0)"""
    array = _check_samples(samples)
    tokens: List[RlcToken] = []
    previous = -1
    for position in np.flatnonzero(array).tolist():
        gap = position - previous - 1
        tokens.extend([RlcToken(MAX_RUN, 0)] * (gap // (MAX_RUN + 1)))
        tokens.append(RlcToken(gap % (MAX_RUN + 1), int(array[position])))
        previous = position

    trailing = array.size - previous - 1
    tokens.extend([RlcToken(MAX_RUN, 0)] * (trailing // (MAX_RUN + 1)))
    terminal = trailing % (MAX_RUN + 1) > 0
    if terminal:
        tokens.append(RlcToken(trailing % (MAX_RUN + 1), 0))
    return RlcStream.construct(element_count=int(array.size), tokens=tokens, terminal=terminal)


def rlc_decode(stream: RlcStream) -> np.ndarray:
    tokens = list(stream.tokens)
    if not tokens:
        if stream.element_count or stream.terminal:
            raise DecodeError("empty token list for a non-empty stream")
        return np.zeros(0, dtype=np.int64)
    for index, token in enumerate(tokens):
        if len(token) != 2:
            raise DecodeError(f"token {index} is truncated")
        run, value = token
        if not 0 <= run <= MAX_RUN:
            raise DecodeError(f"token {index}: run {run} exceeds {MAX_RUN}")
        if not -(1 << 15) <= value <= (1 << 15) - 1:
            raise DecodeError(f"token {index}: value {value} does not fit in 16 bits")

    runs = np.array([token[0] for token in tokens], dtype=np.int64)
    values = np.array([token[1] for token in tokens], dtype=np.int64)
    lengths = runs + 1
    if stream.terminal:
        if values[-1] != 0:
            raise DecodeError("terminal token must carry a zero value")
        lengths[-1] = runs[-1]
    if int(lengths.sum()) != stream.element_count:
        raise DecodeError(f"tokens expand to {int(lengths.sum())} samples, header says {stream.element_count}")

    output = np.zeros(stream.element_count, dtype=np.int64)
    ends = np.cumsum(lengths)
    carrying = slice(None, -1) if stream.terminal else slice(None)
    output[ends[carrying] - 1] = values[carrying]
    return output


def token_bits(stream: RlcStream) -> int:
    return TOKEN_BITS * len(stream.tokens)


def encoded_bits(stream: RlcStream) -> int:
    return HEADER_BITS + token_bits(stream)


def compression_ratio(samples: Union[np.ndarray, Sequence[int]]) -> float:
    """Bits bruts (16 par échantillon) / bits codés, en-tête compris"""
    stream = rlc_encode(samples)
    return VALUE_BITS * stream.element_count / encoded_bits(stream)


def write_rlc_stream(stream: RlcStream) -> bytes:
    """En-tête 16 octets puis jetons de 21 bits, MSB d'abord, groupes de 8 alignés sur l'octet"""
    flags = FLAG_TERMINAL if stream.terminal else 0
    chunks = [struct.pack("<4sIII", RLC_MAGIC, stream.element_count, len(stream.tokens), flags)]
    tokens = list(stream.tokens)
    for start in range(0, len(tokens), TOKENS_PER_GROUP):
        group = tokens[start:start + TOKENS_PER_GROUP]
        packed = 0
        for run, value in group:
            packed = (packed << TOKEN_BITS) | (run << VALUE_BITS) | (value & 0xFFFF)
        bits = TOKEN_BITS * len(group)
        padding = -bits % 8
        chunks.append((packed << padding).to_bytes((bits + padding) // 8, "big"))
    return b"".join(chunks)


def read_rlc_stream(data: bytes) -> RlcStream:
    if len(data) < HEADER_BYTES:
        raise DecodeError("truncated header")
    magic, element_count, token_count, flags = struct.unpack("<4sIII", data[:HEADER_BYTES])
    if magic != RLC_MAGIC:
        raise DecodeError(f"bad magic {magic!r}")
    expected = HEADER_BYTES + (token_count // TOKENS_PER_GROUP) * TOKEN_BITS
    tail = token_count % TOKENS_PER_GROUP
    expected += -(-TOKEN_BITS * tail // 8)
    if len(data) != expected:
        raise DecodeError(f"expected {expected} bytes for {token_count} tokens, got {len(data)}")

    tokens: List[RlcToken] = []
    offset = HEADER_BYTES
    for start in range(0, token_count, TOKENS_PER_GROUP):
        count = min(TOKENS_PER_GROUP, token_count - start)
        bits = TOKEN_BITS * count
        size = -(-bits // 8)
        packed = int.from_bytes(data[offset:offset + size], "big") >> (size * 8 - bits)
        offset += size
        for index in reversed(range(count)):
            word = (packed >> (TOKEN_BITS * index)) & ((1 << TOKEN_BITS) - 1)
            value = word & 0xFFFF
            tokens.append(RlcToken(word >> VALUE_BITS, value - (1 << 16) if value & 0x8000 else value))
    return RlcStream.construct(element_count=element_count, tokens=tokens, terminal=bool(flags & FLAG_TERMINAL))


# ---------------------------------------------------------------------------
# Mémoire des poids
# ---------------------------------------------------------------------------

def memory_bytes(total: int, nonzeros: int, bits: int, pruned: bool) -> int:
    if not pruned:
        return -(-total * bits // 8)
    return HEADER_BYTES + -(-nonzeros * (bits + INDEX_BITS) // 8)


def weight_memory_bytes(weights: WeightSet, bits: int, pruned: bool) -> int:
    return memory_bytes(weights.total_count, weights.nonzero_count, bits, pruned)


# ---------------------------------------------------------------------------
# Grammaire des techniques: "quant=8,qmode=log,prune=0.151,rlc,dataflow=1.4"
# ---------------------------------------------------------------------------

TECHNIQUE_KEYS = ("quant", "qmode", "prune", "rlc", "dataflow")


def parse_technique_string(text: Optional[str]) -> TechniqueSet:
    entries = {}
    for raw in (text or "").split(","):
        token = raw.strip()
        if not token:
            continue
        key, _, value = token.partition("=")
        key = key.strip().lower()
        if key not in TECHNIQUE_KEYS:
            raise TechniqueError(f"unknown technique '{key}' (expected one of {', '.join(TECHNIQUE_KEYS)})")
        if key in entries:
            raise TechniqueError(f"technique '{key}' given twice")
        if key == "rlc" and value:
            raise TechniqueError("'rlc' takes no value")
        if key != "rlc" and not value:
            raise TechniqueError(f"'{key}' needs a value")
        entries[key] = value.strip()

    if "qmode" in entries and "quant" not in entries:
        raise TechniqueError("'qmode' requires 'quant'")
    try:
        quantization = None
        if "quant" in entries:
            quantization = QuantizationSpec(bits=int(entries["quant"]), mode=entries.get("qmode", "uniform"))
        pruning = PruningSpec(target_density=float(entries["prune"])) if "prune" in entries else None
        dataflow = float(entries["dataflow"]) if "dataflow" in entries else None
        return TechniqueSet(quantization=quantization, pruning=pruning,
                            compression="rlc" in entries, dataflow_multiplier=dataflow)
    except (ValidationError, ValueError) as e:
        raise TechniqueError(f"invalid technique string '{text}': {e}")


def describe(techniques: TechniqueSet) -> List[str]:
    parts = []
    if techniques.quantization is not None:
        parts.append(f"quant={techniques.quantization.bits}")
        if techniques.quantization.mode != "uniform":
            parts.append(f"qmode={techniques.quantization.mode}")
    if techniques.pruning is not None:
        parts.append(f"prune={techniques.pruning.target_density}")
    if techniques.compression:
        parts.append("rlc")
    if techniques.dataflow_multiplier is not None:
        parts.append(f"dataflow={techniques.dataflow_multiplier}")
    return parts
