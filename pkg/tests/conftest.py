import numpy as np
import pytest

from skinperm.geometry import (SkinLayer, generate_mesh, layer_preset, mesh_hierarchy,
                               strip_mesh)


@pytest.fixture(scope="session")
def chest_meshes():
    """Chest/old hierarchy up to level 4."""
    return mesh_hierarchy(generate_mesh(layer_preset("chest", "old")), 4)


@pytest.fixture(scope="session")
def strip_meshes():
    """Flat two-band strip with right triangles, levels 0..4."""
    coarse = strip_mesh(40.0, [(SkinLayer.DE, 20.0, 2), (SkinLayer.VE, 20.0, 2)], columns=4)
    return mesh_hierarchy(coarse, 4)


def laplacian_1d(n):
    return (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1)
            - np.diag(np.ones(n - 1), -1))


def laplacian_2d(k):
    T = laplacian_1d(k)
    eye = np.eye(k)
    return np.kron(T, eye) + np.kron(eye, T)
