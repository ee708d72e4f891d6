import csv
import json
import logging
import math

import numpy as np
import pytest

from fermi_scatter import cli
from fermi_scatter.cache import (ENV_VAR, HEADER, CacheCorruptError, KernelCache, decode,
                                 default_cache_dir, encode, read_matrix, write_matrix)
from fermi_scatter.charge_kernel import KernelMatrix, assemble_K
from fermi_scatter.lap_checks import FAIL, CheckReport
from fermi_scatter.oscillator import HermiteBasis, ModelParams
from fermi_scatter.scattering import scattering_length_conversion


@pytest.fixture
def kmat():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(10, 10)) + 1j * rng.normal(size=(10, 10))
    return KernelMatrix(a, "K", 1.3, "plus", 2, 6, 10.0, 1.0, tail_bound=1e-12, tolerance=3e-9)


class TestFormat:
    def test_bit_exact_round_trip(self, kmat, tmp_path):
        p = tmp_path / "m.fpk"
        write_matrix(p, kmat)
        back = read_matrix(p)
        assert back.entries.tobytes() == kmat.entries.tobytes()
        assert (back.tag, back.side, back.cutoff, back.quad_order) == ("K", kmat.side, 2, 6)
        assert back.tolerance == 3e-9 and back.tail_bound == 1e-12

    def test_header_size(self, kmat):
        assert len(encode(kmat)) == HEADER.size + 4 + 16 * 100

    @pytest.mark.parametrize("mangle", [
        lambda b: b[:-1],
        lambda b: b[:10],
        lambda b: b"XXXX" + b[4:],
        lambda b: b[:4] + (2).to_bytes(4, "little") + b[8:],
        lambda b: b[:20] + bytes([b[20] ^ 1]) + b[21:],
    ], ids=["truncated", "short", "magic", "version", "header-bit"])
    def test_corruption_detected(self, kmat, mangle):
        with pytest.raises(CacheCorruptError):
            decode(mangle(encode(kmat)))

    def test_complex_energy_refused(self):
        m = KernelMatrix(np.eye(4), "K", 1.3 + 0.1j, "off-axis", 1, 4, 10.0, 1.0)
        with pytest.raises(ValueError):
            encode(m)


class TestKernelCache:
    def test_keys_distinguish_inputs(self):
        base = dict(tag="K", mu=1.3, side="plus", lam=10.0, omega=1.0, cutoff=4, quad_order=10)
        keys = {KernelCache.key(**base)}
        for k, v in [("mu", 1.3000000001), ("side", "minus"), ("lam", 20.0), ("omega", 2.0),
                     ("cutoff", 3), ("quad_order", 12), ("tag", "Gamma_ref")]:
            keys.add(KernelCache.key(**{**base, k: v}))
        keys.add(KernelCache.key(**base, tail_tol=1e-9))
        assert len(keys) == 9

    def test_hit_skips_assembly(self, tmp_path, caplog):
        cache = KernelCache(tmp_path)
        params, basis = ModelParams(1.0, 10.0), HermiteBasis(1)
        calls = []

        def build():
            calls.append(1)
            return assemble_K("plus", 0.6, basis, params)

        key = cache.key("K", 0.6, "plus", 10.0, 1.0, 1, basis.quad_order)
        first = cache.get_or_build("K", key, build)
        with caplog.at_level(logging.INFO, logger="fermi_scatter.cache"):
            second = cache.get_or_build("K", key, build)
        assert len(calls) == 1
        assert "assembly skipped" in caplog.text
        assert second.entries.tobytes() == first.entries.tobytes()
        assert (cache.stats.hits, cache.stats.misses) == (1, 1)

    @pytest.mark.parametrize("how", ["truncate", "flip", "version"])
    def test_bad_entry_rebuilt(self, tmp_path, kmat, how, caplog):
        cache = KernelCache(tmp_path)
        cache.get_or_build("K", "abc", lambda: kmat)
        p = cache.path("K", "abc")
        data = bytearray(p.read_bytes())
        if how == "truncate":
            data = data[:-8]
        elif how == "flip":
            data[12] ^= 0xFF
        else:
            data[4:8] = (99).to_bytes(4, "little")
        p.write_bytes(bytes(data))
        with caplog.at_level(logging.WARNING):
            m = cache.get_or_build("K", "abc", lambda: kmat)
        assert cache.stats.rebuilds == 1
        assert "rebuilding" in caplog.text
        assert m.entries.tobytes() == kmat.entries.tobytes()
        assert read_matrix(p).entries.tobytes() == kmat.entries.tobytes()

    def test_inspect_and_clear(self, tmp_path, kmat):
        cache = KernelCache(tmp_path)
        cache.get_or_build("K", "abc", lambda: kmat)
        (tmp_path / "K-bad.fpk").write_bytes(b"nope")
        info = {r["file"]: r for r in cache.inspect()}
        assert info["K-abc.fpk"]["valid"] and info["K-abc.fpk"]["dim"] == 10
        assert not info["K-bad.fpk"]["valid"]
        assert cache.clear() == 2
        assert cache.entries() == []

    def test_env_override(self, monkeypatch, tmp_path):
        monkeypatch.setenv(ENV_VAR, str(tmp_path / "c"))
        assert default_cache_dir() == tmp_path / "c"


# ---------------------------------------------------------------------------
# command line


def _run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr().out


@pytest.fixture
def env(tmp_path):
    return ["--cache-dir", str(tmp_path / "cache")], tmp_path


class TestCLI:
    def test_born_elastic(self, capsys, env):
        common, tmp = env
        code, out = _run(capsys, "born", "--energy", "1", "--angular-order", "12", "--out",
                         str(tmp), *common)
        assert code == 0
        side = json.loads((tmp / "born_elastic.json").read_text())
        a = scattering_length_conversion(alpha=100.0)
        assert side["sigma_total"] == pytest.approx(4 * math.pi * a * a * (1 - math.exp(-4)), rel=1e-10)
        assert side["config"]["seed"] == 0 and "version" in side["config"]
        rows = list(csv.reader((tmp / "born_elastic.csv").open()))
        assert rows[0] == ["theta", "phi", "dsigma_domega"]
        assert len(rows) == 1 + 12 * 24

    def test_scattering_length_flag(self, capsys, env):
        common, tmp = env
        a = scattering_length_conversion(alpha=50.0)
        _run(capsys, "born", "--scattering-length", repr(a), "--angular-order", "4", "--out",
             str(tmp), *common)
        cfg = json.loads((tmp / "born_elastic.json").read_text())["config"]
        assert cfg["alpha"] == pytest.approx(50.0)

    def test_config_file(self, capsys, env):
        common, tmp = env
        (tmp / "run.cfg").write_text("# test\nenergy = 2.5\nangular_order = 4\nomega=1.0\n")
        _run(capsys, "born", "--config", str(tmp / "run.cfg"), "--energy", "3", "--out", str(tmp),
             *common)
        cfg = json.loads((tmp / "born_elastic.json").read_text())["config"]
        assert cfg["energy"] == 3.0 and cfg["angular_order"] == 4

    def test_shell_listing_null_sigma(self, capsys, env):
        common, tmp = env
        code, _ = _run(capsys, "born", "--kind", "shell", "--theta", "0.5", "--energy", "2.5",
                       "--out", str(tmp), *common)
        assert code == 0
        assert json.loads((tmp / "born_shell.json").read_text())["sigma_total"] is None

    def test_forward_row_is_four_a_squared(self, capsys, env):
        common, tmp = env
        _run(capsys, "born", "--kind", "shell", "--theta", "0", "--energy", "1.3", "--out",
             str(tmp), *common)
        rows = list(csv.reader((tmp / "born_shell.csv").open()))
        a = scattering_length_conversion(alpha=100.0)
        assert float(rows[1][1]) == pytest.approx(4 * a * a, rel=1e-15)

    def test_closed_channel_is_input_error(self, capsys, env):
        common, tmp = env
        code, out = _run(capsys, "born", "--kind", "state", "--n", "2,0,0", "--energy", "1.5",
                         "--out", str(tmp), *common)
        assert code == cli.EXIT_INPUT
        assert json.loads(out)["type"] == "ClosedChannelError"

    def test_usage_errors(self, capsys, env):
        common, _ = env
        with pytest.raises(SystemExit) as exc:
            cli.main(["check", "--check", "nonsense", *common])
        assert exc.value.code == cli.EXIT_USAGE
        code, _ = _run(capsys, "born", "--tail-tol", "-1", *common)
        assert code == cli.EXIT_USAGE

    def test_solve_and_cache_reuse(self, capsys, env, caplog):
        common, tmp = env
        args = ["solve", "--cutoff", "2", "--energy", "1.3", "--channel", "0,0,0:0.5,0",
                "--channel", "1,0,0", "--channel", "1,1,0", "--out", str(tmp), *common]
        code, _ = _run(capsys, *args)
        assert code == 0
        doc = json.loads((tmp / "solve.json").read_text())
        ok, _, closed = doc["channels"]
        assert ok["f_born"]["re"] > 0 and ok["smin"] > 50
        assert closed["error"]["type"] == "ClosedChannelError"
        first = (tmp / "solve.json").read_bytes()
        with caplog.at_level(logging.INFO, logger="fermi_scatter.cache"):
            _run(capsys, *args)
        assert "assembly skipped" in caplog.text
        assert (tmp / "solve.json").read_bytes() == first

    def test_solve_without_channels(self, capsys, env):
        common, tmp = env
        code, _ = _run(capsys, "solve", "--cutoff", "1", "--out", str(tmp), *common)
        assert code == 0
        assert json.loads((tmp / "solve.json").read_text())["channels"] == []

    def test_scan(self, capsys, env):
        common, tmp = env
        code, _ = _run(capsys, "scan", "--cutoff", "2", "--mu-min", "0.5", "--mu-max", "1.5",
                       "--steps", "11", "--out", str(tmp), *common)
        assert code == 0
        mus = [float(r[0]) for r in list(csv.reader((tmp / "scan.csv").open()))[1:]]
        assert len(mus) == 10 and 1.0 not in mus
        doc = json.loads((tmp / "scan.json").read_text())
        assert doc["thresholds"] == [1] and doc["flagged"] == []
        assert doc["min_smin"] >= 50

    def test_check_quick_is_deterministic(self, capsys, env):
        common, tmp = env
        code, out = _run(capsys, "check", "--check", "agmon", "--check", "free_density", "--quick",
                         "--out", str(tmp), *common)
        assert code == 0
        lines = [json.loads(x) for x in out.splitlines()]
        assert [x["check_id"] for x in lines] == ["agmon", "free_density"]
        assert all("runtime" not in x for x in lines)
        first = (tmp / "check.jsonl").read_bytes()
        _run(capsys, "check", "--check", "agmon", "--check", "free_density", "--quick",
             "--out", str(tmp), *common)
        assert (tmp / "check.jsonl").read_bytes() == first

    def test_check_failure_exit_code(self, capsys, env, monkeypatch):
        common, tmp = env
        bad = CheckReport("agmon", {}, 1.0, "relative", 1e-6, FAIL)
        monkeypatch.setattr(cli, "_run_check", lambda name, cfg, quick: [bad])
        code, out = _run(capsys, "check", "--check", "agmon", "--out", str(tmp), *common)
        assert code == cli.EXIT_CHECK_FAILED
        assert json.loads(out)["status"] == "fail"

    def test_cache_inspect_and_clear(self, capsys, env):
        common, tmp = env
        _run(capsys, "solve", "--cutoff", "1", "--channel", "0,0,0", "--out", str(tmp), *common)
        code, out = _run(capsys, "cache", "inspect", *common)
        assert code == 0 and len(json.loads(out)["entries"]) == 2
        code, out = _run(capsys, "cache", "clear", *common)
        assert json.loads(out)["removed"] == 2
