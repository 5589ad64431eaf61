import json

import numpy as np
import pytest

from holomera import mera, mps
from holomera import serialize as ser


class TestTensorRecords:
    def test_real_roundtrip_exact(self, rng):
        arr = rng.standard_normal((3, 4, 2))
        back = ser.tensor_from_record(ser.tensor_record(arr))
        assert np.array_equal(back, arr)

    def test_complex_roundtrip_exact(self, rng):
        arr = rng.standard_normal((2, 5)) + 1j * rng.standard_normal((2, 5))
        rec = ser.tensor_record(arr)
        assert rec["complex"]
        back = ser.tensor_from_record(rec)
        assert np.array_equal(back, arr)

    def test_seventeen_significant_digits(self):
        rec = ser.tensor_record(np.array([1.0 / 3.0]))
        assert len(rec["values"][0].replace("0.", "")) >= 17

    def test_record_is_json_serializable(self, rng):
        rec = ser.tensor_record(rng.standard_normal((2, 2)))
        json.dumps(rec)


class TestNetworkRoundtrip:
    def test_scale_invariant(self):
        m = mera.build_scale_invariant(3, b=3, seed=4)
        m.meta["note"] = "x"
        back = ser.network_from_json(
            json.loads(ser.dumps(ser.network_to_json(m))))
        assert np.array_equal(back.layer.u, m.layer.u)
        assert np.array_equal(back.layer.w, m.layer.w)
        assert back.meta["note"] == "x"
        back.validate()

    def test_scale_invariant_with_lift(self, ising_chi4):
        back = ser.network_from_json(ser.network_to_json(ising_chi4))
        assert back.lift is not None
        assert np.array_equal(back.lift.w, ising_chi4.lift.w)
        back.validate(tol=1e-10)

    @pytest.mark.parametrize("cap", ["product", "maximally-mixed"])
    def test_finite_range(self, cap):
        fr = mera.build_finite_range(2, 3, 3, cap=cap, seed=9)
        back = ser.network_from_json(ser.network_to_json(fr))
        assert back.w_star == 3 and back.cap.kind == cap
        assert np.array_equal(back.layers[0].u, fr.layers[0].u)
        back.validate()


class TestDeterminism:
    def test_dumps_stable(self):
        m = mera.build_scale_invariant(2, b=3, seed=0)
        a = ser.dumps(ser.network_to_json(m))
        b = ser.dumps(ser.network_to_json(
            mera.build_scale_invariant(2, b=3, seed=0)))
        assert a == b

    def test_csv_format(self, tmp_path):
        path = tmp_path / "t.csv"
        ser.write_csv(path, ["a", "b"], [[1.0 / 3.0, "x"], [2.0, "y"]])
        text = path.read_text(encoding="utf-8")
        assert text.startswith("a,b\n")
        assert "0.33333333333333331" in text
        assert "\r" not in text

    def test_config_hash_stable(self):
        cfg = {"experiment": "flow", "chi": 3}
        assert ser.config_hash(cfg) == ser.config_hash(dict(cfg))
        assert ser.config_hash(cfg) != ser.config_hash({**cfg, "chi": 4})


class TestMpsSerialization:
    def test_roundtrip_fields(self):
        fr = mera.build_finite_range(2, 3, 1, cap="product", seed=0)
        m = mps.to_mps(fr)
        doc = json.loads(ser.dumps(ser.mps_to_json(m)))
        assert doc["chi_mps"] == m.chi_mps
        back0 = ser.tensor_from_record(doc["tensors"][0])
        assert np.array_equal(back0, m.tensors[0])
