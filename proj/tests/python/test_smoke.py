import json
import math

import numpy as np
import pytest

import relimine

LOG = "\n".join(
    [
        '{"rmlog":1,"participant":"P1","task":"quiz","page":"Task"}',
        '{"id":0,"type":"click","t_start_ms":0,"t_end_ms":50}',
        '{"id":1,"type":"mousewheel","page":"LLM","t_start_ms":400,"t_end_ms":600,'
        '"attrs":{"mousewheelDistance":250,"mousewheelDirection":"down"}}',
        '{"id":2,"type":"keypress","t_start_ms":900,"t_end_ms":1100,"attrs":{"keypressKeyCount":3}}',
    ]
)


def test_encode_log_shape_and_layout():
    m = relimine.encode_log(LOG)
    assert m.shape == (3, 37)
    assert np.allclose(m[:, :15].sum(axis=1), 1.0)
    assert m[1, 22] == pytest.approx(math.log(251.0))
    assert m[1, 27] == 1.0
    assert m[0, 16] == 1.0 and m[1, 17] == 1.0


def test_diagnostics_and_parse_error():
    bad = LOG + '\n{"id":3,"type":"teleport","t_start_ms":2000,"t_end_ms":2001}'
    diags = relimine.parse_diagnostics(bad)
    assert [line for line, _ in diags] == [5]
    with pytest.raises(ValueError):
        relimine.encode_log('{"rmlog":2}')


def test_scoring_and_windows():
    assert relimine.mean_abs_index_difference([(1, 3, False), (2, 2, False)]) == pytest.approx(1.0)
    assert relimine.candidate_window_count(900000, 10, 1) == 891
    assert relimine.candidate_window_count(5000, 10) == 1


def test_dbscan_and_welch():
    pts = np.array([[0, 0], [0, 0.1], [0.1, 0], [5, 5], [5, 5.1], [5.1, 5], [20, 20]], dtype=float)
    assert relimine.dbscan(pts, 0.5, 3) == [0, 0, 0, 1, 1, 1, -1]
    r = relimine.welch_t_test([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])
    assert r["p"] == 1.0 and r["t"] == 0.0


def test_render_strip_is_deterministic():
    events = [("click", "Task"), ("copy", "LLM")]
    a = relimine.render_strip(events, "t")
    assert a == relimine.render_strip(events, "t")
    assert a.startswith("<svg") and "copy_LLM" in a
    with pytest.raises(ValueError):
        relimine.render_strip([("warp", "Task")])


def test_default_config_round_trips():
    cfg = json.loads(relimine.default_config())
    assert cfg["windows"] == [10, 20, 30, 40, 50, 60]
    cfg["nonsense"] = 1
    with pytest.raises(ValueError):
        relimine.run_pipeline(json.dumps(cfg))
