import json
import math

import numpy as np
import pytest

from metashield.amplifier import CoiledUnit
from metashield.coupling import reference_array
from metashield.device import MOBILE, PRESETS, SPEAKER, EnclosureKind, export_geometry
from metashield.errors import GeometryError
from metashield.geometry import build_solid, is_watertight, mesh_solid, mesh_volume, read_stl

CFG = reference_array()
COILED = CoiledUnit()


@pytest.fixture(scope="module", params=list(EnclosureKind), ids=lambda k: k.value)
def exported(request, tmp_path_factory):
    path = tmp_path_factory.mktemp(request.param.value) / "enclosure.stl"
    info = export_geometry(PRESETS[request.param], CFG, COILED, path)
    return request.param, path, info


class TestExport:
    def test_stl_is_watertight(self, exported):
        _, path, _ = exported
        _, triangles = read_stl(path)
        assert is_watertight(triangles)

    def test_binary_layout(self, exported):
        _, path, info = exported
        raw = path.read_bytes()
        count = int(np.frombuffer(raw[80:84], "<u4")[0])
        assert count == info["triangles"] and len(raw) == 84 + 50 * count

    def test_volume_matches_analytic(self, exported):
        _, _, info = exported
        assert info["volume_mm3"] == pytest.approx(info["analytic_volume_mm3"], rel=0.005)

    def test_read_back_volume(self, exported):
        _, path, info = exported
        vertices, triangles = read_stl(path)
        assert mesh_volume(vertices, triangles) == pytest.approx(info["volume_mm3"], rel=1e-5)

    def test_sidecar(self, exported):
        kind, path, info = exported
        sidecar = json.loads(path.with_suffix(".json").read_text())
        assert set(sidecar) == {"volume_mm3", "cavity_volumes_mm3", "preset"}
        assert sidecar["preset"] == kind.value
        assert sidecar["volume_mm3"] == info["volume_mm3"]
        assert len(sidecar["cavity_volumes_mm3"]) == len(CFG.units)

    def test_cavity_volume_sum(self, exported):
        _, path, _ = exported
        total = sum(json.loads(path.with_suffix(".json").read_text())["cavity_volumes_mm3"])
        assert total == pytest.approx(795.0, rel=0.20)

    def test_cavity_volumes_are_cylinders(self, exported):
        _, path, _ = exported
        vols = json.loads(path.with_suffix(".json").read_text())["cavity_volumes_mm3"]
        expected = [math.pi * (u.cavity_radius * 1e3) ** 2 * u.h * 1e3 for u in CFG.units]
        np.testing.assert_allclose(vols, expected, rtol=1e-12)


class TestErrors:
    @pytest.mark.parametrize("spacing", [0.0, -0.1e-3, -1e-3])
    def test_non_positive_spacing(self, spacing, tmp_path):
        with pytest.raises(GeometryError):
            export_geometry(MOBILE, CFG, COILED, tmp_path / "x.stl", spacing=spacing)

    def test_too_many_units(self):
        cfg = reference_array(spacing=0.1e-3)
        crowded = type(cfg)(cfg.units * 4, cfg.arrangement, cfg.spacing)
        with pytest.raises(GeometryError):
            build_solid(SPEAKER, crowded, COILED)

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            export_geometry(MOBILE, CFG, COILED, tmp_path / "missing" / "dir" / "x.stl")

    def test_no_files_on_failure(self, tmp_path):
        with pytest.raises(GeometryError):
            export_geometry(MOBILE, CFG, COILED, tmp_path / "x.stl", spacing=-1.0)
        assert list(tmp_path.iterdir()) == []


class TestMesher:
    @pytest.mark.parametrize("spacing", [0.1e-3, 0.5e-3, 1e-3])
    def test_watertight_across_spacings(self, spacing):
        solid = build_solid(MOBILE, CFG, COILED, spacing)
        vertices, triangles = mesh_solid(solid)
        assert is_watertight(triangles)
        assert mesh_volume(vertices, triangles) == pytest.approx(solid.analytic_volume(), rel=0.005)

    def test_deterministic(self):
        a = mesh_solid(build_solid(SPEAKER, CFG, COILED))
        b = mesh_solid(build_solid(SPEAKER, CFG, COILED))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_open_mesh_detected(self):
        solid = build_solid(MOBILE, CFG, COILED)
        _, triangles = mesh_solid(solid)
        assert not is_watertight(triangles[:-1])
