import numpy as np
import pytest

from voxbench.backends import create_backend
from voxbench.episode import load_episode, read_header
from voxbench.evaluate import evaluate_episode
from voxbench.grid import GridSpec
from voxbench.simulate import EpisodeConfig, record_episode


@pytest.fixture(scope="session")
def standard_episode(tmp_path_factory):
    """The standard benchmark episode: 96 s, default sensors, seed 0."""
    path = tmp_path_factory.mktemp("standard") / "standard.voep"
    record_episode(EpisodeConfig(), path)
    return path


class RunCache:
    """Memoized full-episode evaluations shared across acceptance criteria."""

    def __init__(self, episode_path):
        self.episode_path = episode_path
        self._episode = None
        self._reports = {}
        self._end_counts = {}

    @property
    def episode(self):
        if self._episode is None:
            self._episode = load_episode(self.episode_path)
        return self._episode

    def _key(self, backend, params):
        return (backend, tuple(sorted(params.items())))

    def _build(self, backend, params):
        header = self.episode[0]
        res = params.get("minimum_voxel_length", 0.1)
        spec = GridSpec(origin=header.grid_origin, resolution=res)
        return create_backend(backend, spec, params, cell_size=header.cell_size, seed=0)

    def report(self, backend, **params):
        key = self._key(backend, params)
        if key not in self._reports:
            instance = self._build(backend, params)
            self._reports[key] = evaluate_episode(self.episode, instance)
            self._end_counts[key] = instance.occupied_count()
        return self._reports[key]

    def end_count(self, backend, **params):
        key = self._key(backend, params)
        if key not in self._end_counts:
            self.report(backend, **params)
        return self._end_counts[key]


@pytest.fixture(scope="session")
def run_cache(standard_episode):
    return RunCache(standard_episode)
