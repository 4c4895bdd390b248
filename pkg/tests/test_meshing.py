import numpy as np
import pytest

from vesiflow.meshing import (
    INLET,
    OUTLET,
    WALL,
    build_rect_mesh,
    build_y_channel_mesh,
    read_mesh,
    write_mesh,
)


def test_unit_square_counts():
    m = build_rect_mesh(2, 2)
    assert m.n_triangles == 8
    assert m.n_vertices == 9


def test_triangle_count_scales():
    m = build_rect_mesh(64, 64)
    assert m.n_triangles == 2 * 64 * 64


def test_degenerate_extent_rejected():
    with pytest.raises(ValueError, match="extent"):
        build_rect_mesh(4, 4, (0.0, 0.0, 0.0, 1.0))


def test_positive_orientation_and_area():
    m = build_rect_mesh(5, 3, (0.0, 2.0, -1.0, 1.0))
    assert np.all(m.areas > 0)
    assert np.isclose(m.areas.sum(), 4.0)


def test_facets_tag_partition_and_ownership():
    m = build_rect_mesh(4, 4)
    assert m.tag_names == (WALL,)
    # every boundary facet belongs to exactly one triangle and all are tagged
    assert m.facets.shape[0] == 16
    assert np.all(m.facet_tags == 0)
    assert m.facet_tri.shape == (16,)
    # outward normals point away from the owning triangle centroid
    cent = m.vertices[m.triangles[m.facet_tri]].mean(axis=1)
    mids = 0.5 * (m.vertices[m.facets[:, 0]] + m.vertices[m.facets[:, 1]])
    assert np.all(np.sum((mids - cent) * m.facet_normals, axis=1) > 0)


def test_retag_partitions_boundary():
    m = build_rect_mesh(4, 4, (0.0, 2.0, 0.0, 1.0))
    m = m.retag(INLET, lambda mid: mid[:, 0] < 1e-12)
    m = m.retag(OUTLET, lambda mid: mid[:, 0] > 2.0 - 1e-12)
    n_in = len(m.facets_with_tag(INLET))
    n_out = len(m.facets_with_tag(OUTLET))
    n_wall = len(m.facets_with_tag(WALL))
    assert n_in == 4 and n_out == 4
    assert n_in + n_out + n_wall == m.facets.shape[0]


def test_y_channel_variants():
    base = build_y_channel_mesh(1.0, 0.7, 0.7, h=0.1)
    widened = build_y_channel_mesh(1.0, 1.0, 0.7, h=0.1)
    for m in (base, widened):
        assert np.all(m.areas > 0)
        assert len(m.facets_with_tag(INLET)) > 0
        assert len(m.facets_with_tag(OUTLET)) > 0
        assert len(m.facets_with_tag(WALL)) > 0
    assert widened.vertices[:, 1].max() > base.vertices[:, 1].max()


def test_y_channel_negative_width_rejected():
    with pytest.raises(ValueError, match="width"):
        build_y_channel_mesh(1.0, -0.7, 0.7)


def test_text_format_roundtrip(tmp_path):
    m = build_rect_mesh(3, 4, (0.0, 1.5, 0.0, 2.0))
    m = m.retag(INLET, lambda mid: mid[:, 0] < 1e-12)
    p = tmp_path / "mesh.txt"
    write_mesh(p, m)
    back = read_mesh(p)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)
    got = {frozenset(map(int, f)): back.tag_names[t] for f, t in zip(back.facets, back.facet_tags)}
    want = {frozenset(map(int, f)): m.tag_names[t] for f, t in zip(m.facets, m.facet_tags)}
    assert got == want
