import numpy as np
import pytest

from roomloc.audio import synth_speechband
from roomloc.geometry import RoomSpec, axial_mic_array, make_cluster_grid


@pytest.fixture(scope="session")
def cube_room():
    return RoomSpec(np.array([4.0, 4.0, 4.0]))


@pytest.fixture(scope="session")
def six_mic_array(cube_room):
    return axial_mic_array(cube_room.center, 0.2)


@pytest.fixture(scope="session")
def coarse_grid(cube_room):
    return make_cluster_grid(cube_room, [0.5, 0.5, 0.5])


@pytest.fixture(scope="session")
def fine_grid(cube_room):
    return make_cluster_grid(cube_room, [0.25, 0.25, 0.25])


@pytest.fixture(scope="session")
def short_source():
    # 0.5 s keeps simulation-heavy tests quick; framing still yields 17 frames
    return synth_speechband(0.5, seed=77)
