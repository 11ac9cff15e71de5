import numpy as np
import pytest

from vfr.hashgrid import FeatureGrid, GridConfig
from vfr.nn import NetworkBundle, NetworkConfig
from vfr.render import SceneModel
from vfr.scene import generate_toy_dataset, save_nerf_synthetic, sphere_scene

SMALL_GRID = GridConfig(levels=4, channels=2, base_resolution=4, max_resolution=32, table_size=2 ** 10)
SMALL_NET = NetworkConfig(spatial_layers=1, directional_layers=1, width=8, bottleneck_dim=4, sh_degree=2,
                          sh_features=2, pilot_width=8, pilot_layers=1)
UNIT_BOX = np.array([[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]])


def make_model(seed=0, grid=SMALL_GRID, net=SMALL_NET, dtype=np.float64, init_scale=None):
    rng = np.random.default_rng(seed)
    if init_scale is not None:
        grid = GridConfig(grid.levels, grid.channels, grid.base_resolution, grid.max_resolution,
                          grid.table_size, init_scale)
    g = FeatureGrid(grid, rng, dtype)
    return SceneModel(g, NetworkBundle(g.out_dim, net, rng, dtype), UNIT_BOX)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_scene_dir(tmp_path_factory):
    """4 train / 2 test views of the toy sphere at 16x16."""
    root = tmp_path_factory.mktemp("tiny_scene")
    scene = sphere_scene()
    train = generate_toy_dataset(scene, 4, 16, seed=0, quadrature=512)
    test = generate_toy_dataset(scene, 2, 16, seed=1, quadrature=512)
    save_nerf_synthetic(root, {"train": train, "val": test, "test": test})
    return root


# -- acceptance report -------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
