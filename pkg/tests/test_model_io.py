import json
import struct

import numpy as np
import pytest

from spectral_frg.errors import (
    ConfigurationError,
    ContainerParseError,
    EmptyInputError,
    IntegrityError,
    OperatorLookupError,
    ShapeError,
    UnsupportedDtypeError,
)
from spectral_frg.model_io import (
    DUPLICATE_COPY,
    DUPLICATE_SOURCE,
    CostTable,
    Model,
    OperatorDescriptor,
    container_bytes,
    generate_synthetic,
    load_model,
    read_container,
    read_cost_table,
    reshape_for_augment,
    save_model,
    write_container,
)
from spectral_frg.spectral_core import augment


def _raw(header: dict, data: bytes) -> bytes:
    head = json.dumps(header).encode()
    return struct.pack("<Q", len(head)) + head + data


def test_round_trip_bit_identical(tmp_path, rng):
    store = {
        "a": rng.standard_normal((3, 4)).astype(np.float32),
        "b": rng.standard_normal(5),
        "conv": rng.standard_normal((2, 3, 3, 3)).astype(np.float32),
    }
    path = tmp_path / "m.safetensors"
    write_container(store, path)
    back = read_container(path)
    assert sorted(back) == sorted(store)
    for k in store:
        assert back[k].dtype == store[k].dtype
        assert back[k].tobytes() == store[k].tobytes()
        assert back[k].shape == store[k].shape


def test_writes_are_byte_identical(tmp_path, rng):
    store = {"z": rng.standard_normal(3), "a": rng.standard_normal((2, 2))}
    write_container(store, tmp_path / "1")
    write_container(dict(reversed(list(store.items()))), tmp_path / "2")
    assert (tmp_path / "1").read_bytes() == (tmp_path / "2").read_bytes()


def test_layout_is_sorted_and_compact(rng):
    store = {"b": np.zeros(2, np.float32), "a": np.ones(1)}
    raw = container_bytes(store)
    (n,) = struct.unpack("<Q", raw[:8])
    head = raw[8 : 8 + n].decode()
    assert head == ('{"a":{"data_offsets":[0,8],"dtype":"F64","shape":[1]},'
                    '"b":{"data_offsets":[8,16],"dtype":"F32","shape":[2]}}')
    assert raw[8 + n :] == np.ones(1).tobytes() + np.zeros(2, np.float32).tobytes()


def test_readable_by_reference_safetensors(tmp_path, rng):
    st = pytest.importorskip("safetensors.numpy")
    store = {"w": rng.standard_normal((4, 3)).astype(np.float32), "b": rng.standard_normal(4)}
    write_container(store, tmp_path / "x")
    loaded = st.load_file(str(tmp_path / "x"))
    for k in store:
        np.testing.assert_array_equal(loaded[k], store[k])
    st.save_file(store, str(tmp_path / "y"))
    mine = read_container(tmp_path / "y")
    for k in store:
        np.testing.assert_array_equal(mine[k], store[k])


def test_empty_store_rejected(tmp_path):
    with pytest.raises(EmptyInputError):
        write_container({}, tmp_path / "x")


def test_header_length_exceeds_file(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(struct.pack("<Q", 1000) + b"{}")
    with pytest.raises(IntegrityError, match="exceeds file size"):
        read_container(p)


def test_truncated_length_prefix(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"\x01\x02")
    with pytest.raises(ContainerParseError) as info:
        read_container(p)
    assert info.value.offset == 0


def test_malformed_header_reports_offset(tmp_path):
    p = tmp_path / "x"
    head = b'{"a": {'
    p.write_bytes(struct.pack("<Q", len(head)) + head)
    with pytest.raises(ContainerParseError) as info:
        read_container(p)
    assert info.value.offset >= 8


def test_out_of_bounds_range(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(_raw({"a": {"dtype": "F32", "shape": [2], "data_offsets": [0, 8]}}, b"\0" * 4))
    with pytest.raises(IntegrityError, match="outside"):
        read_container(p)


def test_overlapping_ranges(tmp_path):
    p = tmp_path / "x"
    header = {"a": {"dtype": "F32", "shape": [2], "data_offsets": [0, 8]},
              "b": {"dtype": "F32", "shape": [2], "data_offsets": [4, 12]}}
    p.write_bytes(_raw(header, b"\0" * 12))
    with pytest.raises(IntegrityError, match="overlapping"):
        read_container(p)


def test_conv_byte_range_must_match_shape(tmp_path):
    nbytes = 64 * 64 * 3 * 3 * 4
    header = {"w": {"dtype": "F32", "shape": [64, 64, 3, 3], "data_offsets": [0, nbytes - 4]}}
    p = tmp_path / "x"
    p.write_bytes(_raw(header, b"\0" * nbytes))
    with pytest.raises(IntegrityError, match="147456 bytes"):
        read_container(p)
    header["w"]["data_offsets"] = [0, nbytes]
    p.write_bytes(_raw(header, b"\0" * nbytes))
    assert read_container(p)["w"].shape == (64, 64, 3, 3)


@pytest.mark.parametrize("dtype", ["F16", "BF16", "I8"])
def test_unsupported_dtype_named(tmp_path, dtype):
    p = tmp_path / "x"
    p.write_bytes(_raw({"a": {"dtype": dtype, "shape": [1], "data_offsets": [0, 2]}}, b"\0\0"))
    with pytest.raises(UnsupportedDtypeError, match=dtype):
        read_container(p)


def test_metadata_entry_ignored(tmp_path):
    header = {"__metadata__": {"k": "v"}, "a": {"dtype": "F64", "shape": [], "data_offsets": [0, 8]}}
    p = tmp_path / "x"
    p.write_bytes(_raw(header, np.float64(2.5).tobytes()))
    assert read_container(p)["a"] == 2.5


# -- reshape ----------------------------------------------------------------


def test_reshape_conv_3x3_64():
    store = {"w": np.zeros((64, 64, 3, 3)), "b": np.zeros(64)}
    op = OperatorDescriptor("c", "conv2d", "w", "b", hw_op="conv")
    w, b = reshape_for_augment(op, store)
    assert w.shape == (64, 576)
    assert augment(w, b).shape == (65, 577)


def test_reshape_conv_row_major():
    k = np.arange(2 * 3 * 2 * 2, dtype=float).reshape(2, 3, 2, 2)
    op = OperatorDescriptor("c", "conv2d", "w", hw_op="conv")
    w, b = reshape_for_augment(op, {"w": k})
    np.testing.assert_array_equal(w[1], np.arange(12, 24))
    np.testing.assert_array_equal(b, [0, 0])


def test_reshape_linear_passthrough(rng):
    x = rng.standard_normal((10, 20))
    w, _ = reshape_for_augment(OperatorDescriptor("l", "linear", "w"), {"w": x})
    np.testing.assert_array_equal(w, x)


def test_reshape_tiny_conv():
    w, _ = reshape_for_augment(OperatorDescriptor("c", "conv2d", "w"), {"w": np.ones((1, 1, 1, 1))})
    assert w.shape == (1, 1)


def test_reshape_shape_mismatch():
    with pytest.raises(ShapeError):
        reshape_for_augment(OperatorDescriptor("c", "conv2d", "w"), {"w": np.ones((2, 2))})


def test_descriptor_validates_enums():
    with pytest.raises(ConfigurationError, match="kind"):
        OperatorDescriptor("x", "pooling", "w")


def test_model_validation(rng):
    ops = [OperatorDescriptor("l", "linear", "w", "missing")]
    with pytest.raises(OperatorLookupError, match="missing"):
        Model("m", ops, {"w": np.ones((2, 2))})
    with pytest.warns(UserWarning, match="orphan"):
        Model("m", [OperatorDescriptor("l", "linear", "w")], {"w": np.ones((2, 2)), "orphan": np.ones(1)})


# -- synthetic --------------------------------------------------------------


def test_resnet18_like_ladder(resnet_model):
    m = resnet_model
    assert len(m.operators) == 18
    first = m.operators[0]
    assert m.store[first.weight_key].shape == (64, 3, 7, 7)
    w, b = reshape_for_augment(first, m.store)
    assert w.shape == (64, 147) and augment(w, b).shape == (65, 148)
    assert m.store["fc.weight"].shape == (1000, 512)
    channels = [m.store[op.weight_key].shape[0] for op in m.operators[1:-1]]
    assert channels == [64] * 4 + [128] * 4 + [256] * 4 + [512] * 4
    conv3 = [op for op in m.operators if m.store[op.weight_key].shape == (64, 64, 3, 3)]
    assert augment(*reshape_for_augment(conv3[0], m.store)).shape == (65, 577)


def test_resnet18_like_deterministic(tmp_path):
    for i in range(2):
        save_model(generate_synthetic("resnet18_like", 3), tmp_path / f"{i}.st", tmp_path / f"{i}.json")
    assert (tmp_path / "0.st").read_bytes() == (tmp_path / "1.st").read_bytes()
    assert (tmp_path / "0.json").read_bytes() == (tmp_path / "1.json").read_bytes()


def test_resnet18_like_seed_changes_weights():
    a = generate_synthetic("resnet18_like", 0).store["conv1.weight"]
    b = generate_synthetic("resnet18_like", 1).store["conv1.weight"]
    assert not np.array_equal(a, b)


def test_duplicate_probe_structure(probe_model):
    m = probe_model
    src, cp = m.operator(DUPLICATE_SOURCE), m.operator(DUPLICATE_COPY)
    assert np.array_equal(m.store[src.weight_key], m.store[cp.weight_key])
    assert np.array_equal(m.store[src.bias_key], m.store[cp.bias_key])


def test_model_file_round_trip(tmp_path, probe_model):
    save_model(probe_model, tmp_path / "p.st", tmp_path / "p.json")
    back = load_model(tmp_path / "p.st", tmp_path / "p.json")
    assert back.operators == probe_model.operators
    for k, v in probe_model.store.items():
        assert back.store[k].tobytes() == v.tobytes()


def test_custom_profile():
    m = generate_synthetic({"name": "tiny", "layers": [
        {"name": "c", "shape": [4, 2, 3, 3], "bias": True},
        {"name": "l", "shape": [3, 4], "activation": "tanh"}]}, 0)
    assert m.names == ["c", "l"]
    assert m.operator("c").kind == "conv2d" and m.operator("c").hw_op == "conv"
    assert m.operator("l").activation == "tanh"


def test_unknown_profile():
    with pytest.raises(ConfigurationError):
        generate_synthetic("vgg", 0)


# -- cost tables ------------------------------------------------------------


def test_bundled_ascend():
    t = read_cost_table("ascend")
    assert t.target == "ascend" and t.costs["conv"] == 1.2
    assert t.costs["matmul"] == 1.0 and t.costs["elementwise"] == 1.0


def test_bundled_mlu():
    assert read_cost_table("mlu").costs["conv"] == 1.5


def test_cost_zero_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"target": "x", "costs": {"conv": 0}}))
    with pytest.raises(ConfigurationError, match="positive"):
        read_cost_table(p)


def test_cost_table_coverage(probe_model):
    CostTable("t", {"matmul": 1.0}).check_covers(probe_model.operators)
    with pytest.raises(ConfigurationError, match="matmul"):
        CostTable("t", {"conv": 1.0}).check_covers(probe_model.operators)
