"""Moteur de convolution directe en virgule fixe, instrumenté.

Format par défaut Q8.8 sur 16 bits. Les produits sont accumulés sans
débordement possible (accumulateur de 32 + ceil(log2(in*kh*kw)) bits, <= 53
bits, donc exact en float64); seul l'arrondi final (au plus proche, pair en
cas d'égalité) sature.
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel

from config import settings
from models.errors import ConfigError, ShapeError, WeightFileError
from models.hog_models import GrayImage
from models.tensor_models import FixedPointTensor, LayerOutput, WeightSet
from models.workload_models import CnnArchitecture, ConvLayerShape, OpCountReport, PoolLayerShape
from utils.hog import resample
from utils.op_counter import OpCounter

logger = logging.getLogger(__name__)

MAX_ACCUMULATOR_BITS = 53
DEFAULT_FRAC_BITS = 8


class SparsityReport(BaseModel):
    layers: List[Tuple[str, float]] = []
    aggregate: float = 0.0


def _saturate(values: np.ndarray, bits: int) -> np.ndarray:
    return np.clip(values, -(1 << (bits - 1)), (1 << (bits - 1)) - 1)


def round_shift(accumulator: np.ndarray, shift: int) -> np.ndarray:
    """Décalage à droite arrondi au plus proche, égalités vers le pair"""
    if shift == 0:
        return accumulator
    quotient = accumulator >> shift
    remainder = accumulator - (quotient << shift)
    half = 1 << (shift - 1)
    round_up = (remainder > half) | ((remainder == half) & ((quotient & 1) == 1))
    return quotient + round_up


def quantize_real(values: np.ndarray, value_bits: int = 16, frac_bits: int = DEFAULT_FRAC_BITS) -> np.ndarray:
    return _saturate(np.rint(np.asarray(values, dtype=np.float64) * (1 << frac_bits)).astype(np.int64), value_bits)


def _check_layer_inputs(tensor: FixedPointTensor, layer: ConvLayerShape, weights: np.ndarray, bias: np.ndarray) -> int:
    channels = tensor.dims[0]
    if channels != layer.in_channels:
        raise ShapeError(layer.name, f"expects {layer.in_channels} input channels, got {channels}")
    expected = (layer.out_channels, layer.in_channels // layer.groups, layer.kernel_h, layer.kernel_w)
    if tuple(weights.shape) != expected:
        raise ShapeError(layer.name, f"weight shape {tuple(weights.shape)} != {expected}")
    if tuple(bias.shape) != (layer.out_channels,):
        raise ShapeError(layer.name, f"bias shape {tuple(bias.shape)} != ({layer.out_channels},)")
    if tensor.value_bits > 16:
        raise ShapeError(layer.name, "operands wider than 16 bits")
    fan_in = (layer.in_channels // layer.groups) * layer.kernel_h * layer.kernel_w
    accumulator_bits = 32 + math.ceil(math.log2(fan_in))
    if accumulator_bits > MAX_ACCUMULATOR_BITS:
        raise ShapeError(layer.name, f"accumulator of {accumulator_bits} bits exceeds {MAX_ACCUMULATOR_BITS}")
    return fan_in


def run_conv_layer(tensor: FixedPointTensor, layer: ConvLayerShape, weights: np.ndarray, bias: np.ndarray,
                   counter: Optional[OpCounter] = None, workers: Optional[int] = None,
                   weight_frac_bits: Optional[int] = None) -> FixedPointTensor:
    """Convolution d'un tenseur Qm.n par des poids (et biais) à weight_frac_bits bits fractionnaires.

    L'accumulateur porte n + weight_frac_bits bits fractionnaires; la sortie
    revient au format de l'entrée. weight_frac_bits vaut n par défaut.
    """
    counter = counter if counter is not None else OpCounter()
    fan_in = _check_layer_inputs(tensor, layer, weights, bias)
    _, height, width = tensor.dims
    out_h, out_w = layer.output_size(height, width)
    pad, stride = layer.padding, layer.stride
    frac = tensor.frac_bits
    weight_frac = frac if weight_frac_bits is None else weight_frac_bits

    padded = np.pad(tensor.samples, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (layer.kernel_h, layer.kernel_w), axis=(1, 2))
    windows = windows[:, ::stride, ::stride][:, :out_h, :out_w]

    group_in = layer.in_channels // layer.groups
    group_out = layer.out_channels // layer.groups
    positions = out_h * out_w
    columns = []
    for g in range(layer.groups):
        block = windows[g * group_in:(g + 1) * group_in]
        columns.append(block.transpose(1, 2, 0, 3, 4).reshape(positions, fan_in).astype(np.float64))

    # répartition des canaux de sortie: (groupe, premier canal, dernier canal)
    workers = workers or settings.CNN_WORKERS
    chunk = max(1, math.ceil(group_out / workers))
    tasks = [(g, start, min(start + chunk, group_out))
             for g in range(layer.groups) for start in range(0, group_out, chunk)]

    def compute(task):
        g, start, stop = task
        first = g * group_out + start
        last = g * group_out + stop
        kernel = weights[first:last].reshape(last - first, fan_in).astype(np.float64)
        accumulator = (columns[g] @ kernel.T).astype(np.int64)
        # biais au format des poids, aligné sur l'accumulateur
        accumulator += bias[first:last][None, :] << frac
        local = OpCounter().add(macs=columns[g].size * kernel.shape[0], excluded=accumulator.size)
        return first, last, accumulator, local

    output = np.empty((layer.out_channels, positions), dtype=np.int64)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(compute, tasks))
    for first, last, accumulator, local in results:
        output[first:last] = accumulator.T
        counter.merge(local)

    samples = _saturate(round_shift(output, weight_frac), tensor.value_bits).reshape(layer.out_channels, out_h, out_w)
    return FixedPointTensor(samples=samples, value_bits=tensor.value_bits, frac_bits=frac)


def relu(tensor: FixedPointTensor, counter: Optional[OpCounter] = None) -> FixedPointTensor:
    if counter is not None:
        counter.add(excluded=tensor.samples.size)
    return FixedPointTensor(samples=np.maximum(tensor.samples, 0),
                            value_bits=tensor.value_bits, frac_bits=tensor.frac_bits)


def max_pool(tensor: FixedPointTensor, pool: PoolLayerShape, counter: Optional[OpCounter] = None) -> FixedPointTensor:
    channels, height, width = tensor.dims
    out_h, out_w = pool.output_size(height, width)
    low = -(1 << (tensor.value_bits - 1))
    padded = np.pad(tensor.samples, ((0, 0), (pool.padding, pool.padding), (pool.padding, pool.padding)),
                    constant_values=low)
    windows = sliding_window_view(padded, (pool.window, pool.window), axis=(1, 2))
    windows = windows[:, ::pool.stride, ::pool.stride][:, :out_h, :out_w]
    samples = windows.max(axis=(3, 4))
    if counter is not None:
        counter.add(excluded=samples.size * (pool.window * pool.window - 1))
    return FixedPointTensor(samples=samples, value_bits=tensor.value_bits, frac_bits=tensor.frac_bits)


def check_weights(arch: CnnArchitecture, weights: WeightSet) -> None:
    """Formes par couche, format Qm.n des poids et valeurs dans value_bits"""
    convs = arch.conv_layers
    if not 1 <= weights.value_bits <= 16:
        raise WeightFileError(f"weight value_bits must lie in [1, 16], got {weights.value_bits}")
    if not 0 <= weights.frac_bits < weights.value_bits:
        raise WeightFileError(f"weight frac_bits must lie in [0, {weights.value_bits}), got {weights.frac_bits}")
    if len(weights.weights) != len(convs):
        raise WeightFileError(f"{len(weights.weights)} weight layers for {len(convs)} conv layers of {arch.name}")
    for layer, w, b in zip(convs, weights.weights, weights.biases):
        expected = (layer.out_channels, layer.in_channels // layer.groups, layer.kernel_h, layer.kernel_w)
        if tuple(w.shape) != expected or tuple(b.shape) != (layer.out_channels,):
            raise WeightFileError(f"layer '{layer.name}': weights {tuple(w.shape)} do not match {expected}")
    low, high = -(1 << (weights.value_bits - 1)), (1 << (weights.value_bits - 1)) - 1
    for layer, w, b in zip(convs, weights.weights, weights.biases):
        for values in (w, b):
            if values.size and (values.min() < low or values.max() > high):
                raise WeightFileError(f"layer '{layer.name}': values outside the {weights.value_bits}-bit range")


def run_network(arch: CnnArchitecture, weights: WeightSet, tensor: FixedPointTensor,
                upto_layer: Optional[int] = None,
                workers: Optional[int] = None) -> Tuple[List[LayerOutput], OpCountReport]:
    """conv -> ReLU -> (pool), arrêt après la conv n° upto_layer (toutes si None)"""
    check_weights(arch, weights)
    convs = len(arch.conv_layers)
    limit = convs if upto_layer is None else upto_layer
    if not 0 <= limit <= convs:
        raise ConfigError(f"upto_layer must lie in [0, {convs}], got {upto_layer}")
    expected = (arch.input_channels, arch.input_height, arch.input_width)
    if tensor.dims != expected:
        raise ShapeError("input", f"tensor dims {tensor.dims} != descriptor input {expected}")

    counter = OpCounter()
    outputs: List[LayerOutput] = []
    current = tensor
    for layer in arch.layers:
        if len(outputs) >= limit:
            break
        if isinstance(layer, ConvLayerShape):
            ordinal = len(outputs)
            layer_counter = OpCounter()
            current = run_conv_layer(current, layer, weights.weights[ordinal], weights.biases[ordinal],
                                     layer_counter, workers, weight_frac_bits=weights.frac_bits)
            current = relu(current, layer_counter)
            counter.merge(layer_counter)
            outputs.append(LayerOutput(index=ordinal + 1, name=layer.name, tensor=current,
                                       sparsity=current.sparsity, macs=layer_counter.macs))
            logger.info(f"{arch.name}/{layer.name}: {current.dims}, sparsité {current.sparsity:.3f}")
        else:
            current = max_pool(current, layer, counter)
    return outputs, counter.report(arch.input_pixels)


def measure_sparsity(outputs: List[LayerOutput]) -> SparsityReport:
    layers = [(output.name, output.sparsity) for output in outputs]
    total = sum(output.tensor.samples.size for output in outputs)
    zeros = sum(int(np.count_nonzero(output.tensor.samples == 0)) for output in outputs)
    return SparsityReport(layers=layers, aggregate=zeros / total if total else 0.0)


# ---------------------------------------------------------------------------
# Poids et entrées
# ---------------------------------------------------------------------------

def random_weights(arch: CnnArchitecture, seed: int, value_bits: int = 16,
                   frac_bits: int = DEFAULT_FRAC_BITS) -> WeightSet:
    """Poids uniformes dans [-1, 1) puis quantifiés; la précision n'est pas l'objet ici"""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for layer in arch.conv_layers:
        shape = (layer.out_channels, layer.in_channels // layer.groups, layer.kernel_h, layer.kernel_w)
        weights.append(quantize_real(rng.uniform(-1.0, 1.0, size=shape), value_bits, frac_bits))
        biases.append(quantize_real(rng.uniform(-1.0, 1.0, size=layer.out_channels), value_bits, frac_bits))
    return WeightSet(architecture=arch.name, value_bits=value_bits, frac_bits=frac_bits,
                     weights=weights, biases=biases)


def random_input(arch: CnnArchitecture, seed: int, frac_bits: int = DEFAULT_FRAC_BITS) -> FixedPointTensor:
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.0, 1.0, size=(arch.input_channels, arch.input_height, arch.input_width))
    return FixedPointTensor(samples=quantize_real(values, arch.value_bits, frac_bits),
                            value_bits=arch.value_bits, frac_bits=frac_bits)


def image_to_tensor(image: GrayImage, arch: CnnArchitecture, frac_bits: int = DEFAULT_FRAC_BITS) -> FixedPointTensor:
    """Redimensionne à la résolution du descripteur, luminance répliquée sur chaque canal"""
    resized = resample(image, arch.input_height, arch.input_width)
    plane = resized.samples.astype(np.float64) / (255.0 * (1 << resized.frac_bits))
    values = np.broadcast_to(plane, (arch.input_channels,) + plane.shape)
    return FixedPointTensor(samples=quantize_real(values, arch.value_bits, frac_bits),
                            value_bits=arch.value_bits, frac_bits=frac_bits)


def save_weights(path: Union[str, Path], arch: CnnArchitecture, weights: WeightSet) -> None:
    check_weights(arch, weights)
    manifest = {
        "architecture": arch.name,
        "value_bits": weights.value_bits,
        "frac_bits": weights.frac_bits,
        "layers": [
            {"name": layer.name, "weight_count": int(w.size), "bias_count": int(b.size)}
            for layer, w, b in zip(arch.conv_layers, weights.weights, weights.biases)
        ],
    }
    with open(path, "wb") as f:
        f.write(json.dumps(manifest, sort_keys=True).encode("utf-8") + b"\n")
        f.write(weights.flat().astype("<i2").tobytes())


def load_weights(path: Union[str, Path], arch: CnnArchitecture) -> WeightSet:
    with open(path, "rb") as f:
        data = f.read()
    newline = data.find(b"\n")
    if newline < 0:
        raise WeightFileError("missing manifest line")
    try:
        manifest = json.loads(data[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WeightFileError(f"unreadable manifest: {e}")

    if manifest.get("architecture") != arch.name:
        raise WeightFileError(f"manifest is for '{manifest.get('architecture')}', not '{arch.name}'")
    entries = manifest.get("layers", [])
    convs = arch.conv_layers
    if len(entries) != len(convs):
        raise WeightFileError(f"manifest lists {len(entries)} layers, {arch.name} has {len(convs)}")
    for entry, layer in zip(entries, convs):
        expected_weights = layer.out_channels * (layer.in_channels // layer.groups) * layer.kernel_h * layer.kernel_w
        if (entry.get("name") != layer.name or entry.get("weight_count") != expected_weights
                or entry.get("bias_count") != layer.out_channels):
            raise WeightFileError(f"manifest entry {entry} does not match layer '{layer.name}'")

    payload = data[newline + 1:]
    total = sum(entry["weight_count"] + entry["bias_count"] for entry in entries)
    if len(payload) != 2 * total:
        raise WeightFileError(f"expected {2 * total} payload bytes, got {len(payload)}")
    flat = np.frombuffer(payload, dtype="<i2").astype(np.int64)

    value_bits = manifest.get("value_bits", 16)
    frac_bits = manifest.get("frac_bits", DEFAULT_FRAC_BITS)
    if not isinstance(value_bits, int) or not isinstance(frac_bits, int):
        raise WeightFileError(f"manifest value_bits/frac_bits must be integers, got {value_bits}/{frac_bits}")
    template = WeightSet(
        architecture=arch.name,
        value_bits=value_bits,
        frac_bits=frac_bits,
        weights=[np.zeros((l.out_channels, l.in_channels // l.groups, l.kernel_h, l.kernel_w), dtype=np.int64)
                 for l in convs],
        biases=[np.zeros(l.out_channels, dtype=np.int64) for l in convs],
    )
    weights = template.with_flat(flat)
    check_weights(arch, weights)
    logger.info(f"Poids chargés depuis {path}: {total} valeurs")
    return weights
