import numpy as np
import pytest

from models.errors import ConfigError, ShapeError, WeightFileError
from models.tensor_models import FixedPointTensor, WeightSet
from models.workload_models import CnnArchitecture, ConvLayerShape, PoolLayerShape
from utils.cnn import (
    check_weights,
    image_to_tensor,
    load_weights,
    max_pool,
    measure_sparsity,
    quantize_real,
    random_input,
    random_weights,
    relu,
    round_shift,
    run_conv_layer,
    run_network,
    save_weights,
)
from utils.op_counter import OpCounter
from utils.workload import conv_layer_macs

ONE = 1 << 8


@pytest.fixture
def tiny_arch() -> CnnArchitecture:
    return CnnArchitecture(name="tiny", input_height=8, input_width=8, input_channels=2, layers=[
        ConvLayerShape(name="c1", in_channels=2, out_channels=4, kernel_h=3, kernel_w=3, padding=1),
        PoolLayerShape(name="p1", window=2, stride=2),
        ConvLayerShape(name="c2", in_channels=4, out_channels=4, kernel_h=3, kernel_w=3, groups=2),
    ])


def tensor_of(values) -> FixedPointTensor:
    return FixedPointTensor(samples=np.asarray(values, dtype=np.int64))


def test_identity_kernel(rng):
    layer = ConvLayerShape(name="id", in_channels=1, out_channels=1, kernel_h=1, kernel_w=1)
    tensor = tensor_of(rng.integers(-3000, 3000, size=(1, 5, 6)))
    output = run_conv_layer(tensor, layer, np.full((1, 1, 1, 1), ONE), np.zeros(1, dtype=np.int64))
    assert np.array_equal(output.samples, tensor.samples)


def test_ones_kernel_sums_window():
    layer = ConvLayerShape(name="sum", in_channels=1, out_channels=1, kernel_h=2, kernel_w=2)
    output = run_conv_layer(tensor_of(np.full((1, 2, 2), ONE)), layer,
                            np.full((1, 1, 2, 2), ONE), np.zeros(1, dtype=np.int64))
    assert output.dims == (1, 1, 1)
    assert output.to_real()[0, 0, 0] == 4.0


def test_bias_is_added():
    layer = ConvLayerShape(name="b", in_channels=1, out_channels=2, kernel_h=1, kernel_w=1)
    output = run_conv_layer(tensor_of(np.zeros((1, 2, 2))), layer,
                            np.zeros((2, 1, 1, 1), dtype=np.int64), np.array([ONE, -ONE // 2]))
    assert (output.to_real()[0] == 1.0).all()
    assert (output.to_real()[1] == -0.5).all()


def test_output_saturates():
    layer = ConvLayerShape(name="sat", in_channels=1, out_channels=1, kernel_h=1, kernel_w=1)
    output = run_conv_layer(tensor_of([[[32767, -32768]]]), layer,
                            np.full((1, 1, 1, 1), 32767), np.zeros(1, dtype=np.int64))
    assert output.samples.ravel().tolist() == [32767, -32768]


def test_round_shift_ties_to_even():
    values = np.array([128, 384, -128, 129, -129, 640])
    assert round_shift(values, 8).tolist() == [0, 2, 0, 1, -1, 2]


def test_grouped_conv_matches_real_arithmetic(rng):
    layer = ConvLayerShape(name="g", in_channels=4, out_channels=6, kernel_h=3, kernel_w=2,
                           stride=2, padding=1, groups=2)
    tensor = FixedPointTensor(samples=quantize_real(rng.uniform(-2, 2, (4, 9, 8))))
    weights = quantize_real(rng.uniform(-1, 1, (6, 2, 3, 2)))
    bias = quantize_real(rng.uniform(-1, 1, 6))
    counter = OpCounter()
    output = run_conv_layer(tensor, layer, weights, bias, counter, workers=3)

    x = np.pad(tensor.to_real(), ((0, 0), (1, 1), (1, 1)))
    w = weights / ONE
    expected = np.zeros(output.dims)
    for o in range(6):
        g = o // 3
        for i in range(output.dims[1]):
            for j in range(output.dims[2]):
                patch = x[2 * g:2 * g + 2, 2 * i:2 * i + 3, 2 * j:2 * j + 2]
                expected[o, i, j] = (patch * w[o]).sum() + bias[o] / ONE
    assert np.max(np.abs(output.to_real() - expected)) <= 0.5 / ONE
    assert counter.macs == conv_layer_macs(layer, 9, 8)
    assert counter.excluded == output.samples.size


def test_conv_ignores_worker_count(rng):
    layer = ConvLayerShape(name="w", in_channels=4, out_channels=8, kernel_h=3, kernel_w=3, padding=1, groups=2)
    tensor = FixedPointTensor(samples=quantize_real(rng.uniform(-2, 2, (4, 7, 9))))
    weights = quantize_real(rng.uniform(-1, 1, (8, 2, 3, 3)))
    bias = quantize_real(rng.uniform(-1, 1, 8))
    single, many = OpCounter(), OpCounter()
    first = run_conv_layer(tensor, layer, weights, bias, single, workers=1)
    second = run_conv_layer(tensor, layer, weights, bias, many, workers=4)
    assert np.array_equal(first.samples, second.samples)
    assert single == many


def test_weights_in_their_own_format():
    layer = ConvLayerShape(name="q", in_channels=1, out_channels=1, kernel_h=1, kernel_w=1)
    # poids 0.5 et biais 0.25 en Q4.12, entrée 1.0 en Q8.8
    output = run_conv_layer(tensor_of(np.full((1, 2, 2), ONE)), layer, np.full((1, 1, 1, 1), 2048),
                            np.array([1024]), weight_frac_bits=12)
    assert output.frac_bits == 8
    assert (output.samples == 192).all()


def test_doubling_weights_never_shrinks_outputs(rng):
    layer = ConvLayerShape(name="s", in_channels=2, out_channels=3, kernel_h=3, kernel_w=3)
    weights = quantize_real(rng.uniform(-1, 1, (3, 2, 3, 3)))
    bias = quantize_real(rng.uniform(-1, 1, 3))
    tensor = FixedPointTensor(samples=quantize_real(rng.uniform(-4, 4, (2, 6, 6))))
    once = run_conv_layer(tensor, layer, weights, bias).samples
    twice = run_conv_layer(tensor, layer, 2 * weights, 2 * bias).samples
    assert (np.abs(twice) >= np.abs(once)).all()

    layer = ConvLayerShape(name="p", in_channels=8, out_channels=3, kernel_h=3, kernel_w=3)
    positive = FixedPointTensor(samples=quantize_real(rng.uniform(0, 4, (8, 6, 6))))
    weights = quantize_real(rng.uniform(0.5, 1, (3, 8, 3, 3)))
    bias = quantize_real(rng.uniform(0, 1, 3))
    once = run_conv_layer(positive, layer, weights, bias).samples
    twice = run_conv_layer(positive, layer, 2 * weights, 2 * bias).samples
    assert (twice >= once).all()
    assert (twice == 32767).any()


def test_conv_rejects_channel_mismatch():
    layer = ConvLayerShape(name="c", in_channels=3, out_channels=1, kernel_h=1, kernel_w=1)
    with pytest.raises(ShapeError, match="'c'"):
        run_conv_layer(tensor_of(np.zeros((2, 4, 4))), layer,
                       np.zeros((1, 3, 1, 1), dtype=np.int64), np.zeros(1, dtype=np.int64))


def test_relu_and_max_pool():
    tensor = tensor_of([[[-5, 3, 1, -1], [2, -7, 0, 4], [9, 8, -2, -3], [1, 1, -6, 5]]])
    rectified = relu(tensor)
    assert rectified.samples.min() == 0
    pooled = max_pool(rectified, PoolLayerShape(name="p", window=2, stride=2))
    assert pooled.samples[0].tolist() == [[3, 4], [9, 5]]


def test_relu_sparsity(rng):
    assert relu(tensor_of(-rng.integers(1, 1000, size=(2, 5, 5)))).sparsity == 1.0
    symmetric = relu(tensor_of(rng.integers(-1000, 1000, size=(1, 100, 100))))
    assert symmetric.sparsity == pytest.approx(0.5, abs=0.05)


def test_max_pool_overlapping_windows():
    tensor = tensor_of(np.arange(25).reshape(1, 5, 5))
    pooled = max_pool(tensor, PoolLayerShape(name="p", window=3, stride=2))
    assert pooled.samples[0].tolist() == [[12, 14], [22, 24]]


def test_run_network_tiny(tiny_arch):
    weights = random_weights(tiny_arch, seed=3)
    outputs, report = run_network(tiny_arch, weights, random_input(tiny_arch, seed=4))
    assert [output.name for output in outputs] == ["c1", "c2"]
    assert outputs[-1].tensor.dims == (4, 2, 2)
    assert report.macs == conv_layer_macs(tiny_arch.layers[0], 8, 8) + conv_layer_macs(tiny_arch.layers[2], 4, 4)
    assert [output.macs for output in outputs] == [conv_layer_macs(tiny_arch.layers[0], 8, 8),
                                                   conv_layer_macs(tiny_arch.layers[2], 4, 4)]
    for output in outputs:
        assert output.tensor.samples.min() >= 0
        assert 0 <= output.sparsity <= 1
    aggregate = measure_sparsity(outputs).aggregate
    assert 0 <= aggregate <= 1


def test_run_network_upto_zero(tiny_arch):
    outputs, report = run_network(tiny_arch, random_weights(tiny_arch, 0), random_input(tiny_arch, 0), upto_layer=0)
    assert outputs == []
    assert report.macs == 0


def test_run_network_rejects_bad_upto(tiny_arch):
    with pytest.raises(ConfigError):
        run_network(tiny_arch, random_weights(tiny_arch, 0), random_input(tiny_arch, 0), upto_layer=3)


def test_run_network_rejects_input_dims(tiny_arch):
    tensor = FixedPointTensor(samples=np.zeros((2, 9, 8), dtype=np.int64))
    with pytest.raises(ShapeError):
        run_network(tiny_arch, random_weights(tiny_arch, 0), tensor)


def test_alexnet_first_three_layers(alexnet):
    outputs, report = run_network(alexnet, random_weights(alexnet, 0), random_input(alexnet, 0), upto_layer=3)
    assert report.macs == 478_884_384
    assert [output.tensor.dims for output in outputs] == [(96, 55, 55), (256, 27, 27), (384, 13, 13)]


def test_random_weights_are_seeded(tiny_arch):
    a, b = random_weights(tiny_arch, 7), random_weights(tiny_arch, 7)
    assert np.array_equal(a.flat(), b.flat())
    assert a.total_count == tiny_arch.weight_count()


def test_image_to_tensor(scene_image, alexnet):
    tensor = image_to_tensor(scene_image, alexnet)
    assert tensor.dims == (3, 227, 227)
    assert np.array_equal(tensor.samples[0], tensor.samples[2])
    assert 0 <= tensor.samples.min() and tensor.samples.max() <= ONE


def test_weight_file_round_trip(tmp_path, tiny_arch):
    weights = random_weights(tiny_arch, 11)
    path = tmp_path / "tiny.weights"
    save_weights(path, tiny_arch, weights)
    loaded = load_weights(path, tiny_arch)
    assert np.array_equal(loaded.flat(), weights.flat())
    assert [w.shape for w in loaded.weights] == [w.shape for w in weights.weights]


def test_weight_file_keeps_weight_format(tmp_path):
    arch = CnnArchitecture(name="unit", input_height=2, input_width=2, input_channels=1, layers=[
        ConvLayerShape(name="u", in_channels=1, out_channels=1, kernel_h=1, kernel_w=1),
    ])
    weights = WeightSet(architecture="unit", value_bits=16, frac_bits=12,
                        weights=[np.full((1, 1, 1, 1), 2048)], biases=[np.array([1024])])
    path = tmp_path / "unit.weights"
    save_weights(path, arch, weights)
    loaded = load_weights(path, arch)
    assert loaded.frac_bits == 12
    outputs, _ = run_network(arch, loaded, tensor_of(np.full((1, 2, 2), ONE)))
    assert np.allclose(outputs[0].tensor.to_real(), 0.75)


def test_weight_values_must_fit_declared_bits(tiny_arch):
    weights = random_weights(tiny_arch, 2, value_bits=8, frac_bits=4)
    weights.weights[0][0, 0, 0, 0] = 200
    with pytest.raises(WeightFileError, match="8-bit"):
        check_weights(tiny_arch, weights)


@pytest.mark.parametrize("old, new", [('"frac_bits": 8', '"frac_bits": 16'), ('"value_bits": 16', '"value_bits": 32')])
def test_weight_manifest_format_is_validated(tmp_path, tiny_arch, old, new):
    path = tmp_path / "tiny.weights"
    save_weights(path, tiny_arch, random_weights(tiny_arch, 1))
    path.write_bytes(path.read_bytes().replace(old.encode(), new.encode(), 1))
    with pytest.raises(WeightFileError):
        load_weights(path, tiny_arch)


def test_weight_file_for_other_architecture(tmp_path, tiny_arch, alexnet):
    path = tmp_path / "tiny.weights"
    save_weights(path, tiny_arch, random_weights(tiny_arch, 1))
    with pytest.raises(WeightFileError, match="tiny"):
        load_weights(path, alexnet)


def test_weight_file_truncated_payload(tmp_path, tiny_arch):
    path = tmp_path / "tiny.weights"
    save_weights(path, tiny_arch, random_weights(tiny_arch, 1))
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(WeightFileError):
        load_weights(path, tiny_arch)


def test_weight_file_without_manifest(tmp_path, tiny_arch):
    path = tmp_path / "raw.weights"
    path.write_bytes(b"\x00\x01\x02")
    with pytest.raises(WeightFileError):
        load_weights(path, tiny_arch)
