import pytest

from fleetreg.fleet import init_fleet
from fleetreg.manifest import FleetSpec, builtin_bzl_manifest


@pytest.fixture
def bzl():
    return builtin_bzl_manifest()


@pytest.fixture
def big_fleet(bzl):
    return init_fleet(bzl.fleet_default)


@pytest.fixture
def node_fleet():
    return init_fleet(FleetSpec(nodes=1, devices_per_node=8))
