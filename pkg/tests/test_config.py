import math
from pathlib import Path

import pytest

from articrig.config import DERIVE, PipelineConfig, load_config, render_config
from articrig.errors import ConfigError

EXAMPLE = """
[assets]
bike_dir = fixtures/bike
skeleton = /abs/skeleton.json
body_pose = fixtures/rider_pose.json

[bike]
theta_p_deg = derive
theta_s_deg = 90
theta_y_deg = -30
t = 1, 2.5, -3

[refine]
learning_rate = 0.02
max_iters = 7
gradient_mode = analytic
objective_mode = paired

[dataset]
n_views = 12
azimuth_step_deg = 30
radius = 8
orbit_center = 0 0.5 0

[output]
out_dir = out
record_timings = yes
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_example(tmp_path):
    cfg = load_config(write(tmp_path, EXAMPLE))
    assert cfg.bike_dir == tmp_path / "fixtures/bike"
    assert cfg.skeleton == Path("/abs/skeleton.json")
    assert cfg.out_dir == tmp_path / "out"
    assert cfg.bike.theta_p == DERIVE
    assert cfg.bike.theta_s == math.radians(90)
    assert cfg.bike.theta_Y == math.radians(-30)
    assert cfg.bike.t == (1.0, 2.5, -3.0)
    assert (cfg.refine.learning_rate, cfg.refine.max_iters) == (0.02, 7)
    assert cfg.refine.gradient_mode == "analytic" and cfg.refine.objective_mode == "paired"
    assert cfg.dataset.n_views == 12 and cfg.dataset.radius == 8.0
    assert cfg.dataset.orbit_center == (0.0, 0.5, 0.0)
    assert cfg.record_timings is True


def test_empty_file_gives_defaults(tmp_path):
    cfg = load_config(write(tmp_path, ""))
    assert cfg.refine.max_iters == 50 and cfg.dataset.n_views == 36
    assert cfg.bike.theta_p == 0.0 and cfg.bike_dir is None


@pytest.mark.parametrize(
    "text",
    [
        "[dataset]\nn_views = 36\nazimuth_step_deg = 12\n",
        "[dataset]\nn_views = 0\n",
        "[dataset]\nradius = -1\n",
        "[bike]\ntheta_p_deg = ninety\n",
        "[bike]\ntheta_x_deg = derive\n",
        "[bike]\nt = 1, 2\n",
        "[refine]\nmax_iters = lots\n",
        "[refine]\nlearning_rate = -0.1\n",
        "[refine]\nrefine_joint_map = bbtn\n",
        "[output]\nrecord_timings = maybe\n",
        "not an ini file",
        "[a]\nx = 1\n[a]\nx = 2\n",
    ],
)
def test_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.ini")


def test_joint_map(tmp_path):
    text = (
        "[refine]\nrefine_joint_map = bbtn=Spine2, Lsho=L_Shoulder, Rsho=R_Shoulder, Lelb=L_Elbow,"
        " Relb=R_Elbow, Lhip=L_Hip, Rhip=R_Hip, Lknee=L_Knee, Rknee=R_Knee, Lank=L_Ankle, Rank=R_Ankle\n"
    )
    cfg = load_config(write(tmp_path, text))
    assert dict(cfg.refine.refine_joint_map)["bbtn"] == "Spine2"


def test_render_round_trip(tmp_path):
    cfg = load_config(write(tmp_path, EXAMPLE))
    again = load_config(write(tmp_path, render_config(cfg, base=tmp_path), "again.ini"))
    for field in ("bike_dir", "skeleton", "body_pose", "out_dir", "seed", "sh_mode"):
        assert getattr(again, field) == getattr(cfg, field)
    assert again.bike == cfg.bike
    assert again.refine == cfg.refine
    assert again.dataset == cfg.dataset


def test_render_defaults_parse(tmp_path):
    text = render_config(PipelineConfig())
    assert "azimuth_step_deg = 10.0" in text
    assert load_config(write(tmp_path, text)).dataset.n_views == 36
