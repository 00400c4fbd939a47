from spcnav.utils import SpcNavError
from spcnav.versioning import *

import pytest


def test_stamp():
    data = stamp({"a": 1})
    assert data["_major"] == SPCNAV_DATAMODEL_MAJOR_VERSION
    assert data["_minor"] == SPCNAV_DATAMODEL_MINOR_VERSION
    assert data["a"] == 1


def test_upgrade_document():
    # Unstamped documents are considered current
    assert upgrade_document({"a": 1}, "world")["a"] == 1

    old = {"_major": 0, "_minor": 0, "id": "x"}
    upgraded = upgrade_document(old, "episode")
    assert upgraded["start_heading"] == 0.0
    assert upgraded["_minor"] == SPCNAV_DATAMODEL_MINOR_VERSION

    # The input is not modified
    assert "start_heading" not in old

    config = upgrade_document({"_major": 0, "_minor": 0, "train": {"monitor_weight": 2.0}}, "config")
    assert config["train"] == {"progress_weight": 2.0}

    # Kinds without upgrade functions pass through
    assert upgrade_document({"_major": 0, "_minor": 0, "x": 1}, "world")["x"] == 1


def test_incompatible_versions():
    with pytest.raises(SpcNavError):
        upgrade_document({"_major": SPCNAV_DATAMODEL_MAJOR_VERSION + 1, "_minor": 0}, "world")

    with pytest.raises(SpcNavError):
        upgrade_document(
            {"_major": SPCNAV_DATAMODEL_MAJOR_VERSION, "_minor": SPCNAV_DATAMODEL_MINOR_VERSION + 1},
            "world",
        )
