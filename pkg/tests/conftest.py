import numpy as np
import pytest

from soy.minimodel import build_mini_model
from soy.model import save_model


@pytest.fixture(scope="session")
def model():
    return build_mini_model()


@pytest.fixture(scope="session")
def model_path(model, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "mini.smf"
    save_model(model, path)
    return path


@pytest.fixture(scope="session")
def model_chunks(model):
    """Raw chunk arrays for building tweaked models in-memory."""

    def fresh() -> dict:
        parents = np.asarray(model.parents, dtype=np.int64).copy()
        return {
            "v_template": model.v_template.copy(),
            "shapedirs": model.shapedirs.copy(),
            "posedirs": model.posedirs.copy(),
            "joint_regressor": model.joint_regressor.copy(),
            "skin_weights": model.skin_weights.copy(),
            "parents": parents,
            "faces": model.faces.copy(),
            "shape_prior_mean": model.shape_prior_mean.copy(),
            "shape_prior_cov": model.shape_prior_cov.copy(),
            "pose_prior_mean": model.pose_prior_mean.copy(),
            "pose_prior_cov": model.pose_prior_cov.copy(),
        }

    return fresh
