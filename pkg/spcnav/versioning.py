from spcnav.utils import SpcNavError


# Define the current major version of the data model used for all files
# written by spcnav (configs, worlds, episodes, checkpoints). This number
# should be increased whenever there is a *non-backwards compatible* change in
# the data model. It invalidates any files written for prior major versions.
SPCNAV_DATAMODEL_MAJOR_VERSION = 0

# Define the current minor version of the data model. This number should be
# increased whenever there is a change to the model e.g. the addition or
# renaming of fields. When increasing this number you should also add upgrade
# functions that allow spcnav to port existing files to the new minor version.
SPCNAV_DATAMODEL_MINOR_VERSION = 1

# A global registry of update functions, keyed by document kind and version
_upgrade_functions = {}


def upgrade_function(kind, major, minor):
    """A decorator to use to mark an upgrade function.

    Upgrade functions are expected to take a JSON document
    as their only argument and return a modified JSON.

    :param kind:
        The kind of document, e.g. :code:`world`, :code:`episode` or :code:`config`
    :param major:
        The major version to upgrade from
    :param minor:
        The minor version to upgrade from
    """

    def _decorator(func):
        _upgrade_functions[kind, major, minor] = func
        return func

    return _decorator


def stamp(data):
    """Add the current data model version to a JSON document"""
    data = dict(data)
    data["_major"] = SPCNAV_DATAMODEL_MAJOR_VERSION
    data["_minor"] = SPCNAV_DATAMODEL_MINOR_VERSION
    return data


def upgrade_document(data, kind):
    """Upgrades a given document to the current data model version

    Documents without a version stamp are treated as current. Upgrade
    functions that are not registered for a given kind are no-ops.
    """
    data = dict(data)
    major = data.get("_major", SPCNAV_DATAMODEL_MAJOR_VERSION)
    minor = data.get("_minor", SPCNAV_DATAMODEL_MINOR_VERSION)

    # If this is an incompatible major version, we throw an error
    if major != SPCNAV_DATAMODEL_MAJOR_VERSION:
        raise SpcNavError(f"Loading an outdated {kind} file (major version {major})")

    # If the document is newer than the version of spcnav we also throw
    if minor > SPCNAV_DATAMODEL_MINOR_VERSION:
        raise SpcNavError(f"Update your version of spcnav to use this {kind} file")

    for m in range(minor, SPCNAV_DATAMODEL_MINOR_VERSION):
        func = _upgrade_functions.get((kind, SPCNAV_DATAMODEL_MAJOR_VERSION, m))
        if func is not None:
            data = func(data)

    data["_major"] = SPCNAV_DATAMODEL_MAJOR_VERSION
    data["_minor"] = SPCNAV_DATAMODEL_MINOR_VERSION
    return data


#
# In the following all upgrade functions to the spcnav data model are implemented.
#


@upgrade_function("episode", 0, 0)
def add_start_heading(episode):
    """Update function (0, 0) -> (0, 1)

    Episodes of data model 0.0 did not record the heading the agent faces
    at the start viewpoint. The agent used to start facing east.
    """
    episode.setdefault("start_heading", 0.0)
    return episode


@upgrade_function("config", 0, 0)
def rename_progress_weight(config):
    """Update function (0, 0) -> (0, 1)

    The weight of the progress monitor loss used to be called :code:`monitor_weight`.
    """
    train = dict(config.get("train", {}))
    if "monitor_weight" in train:
        train["progress_weight"] = train.pop("monitor_weight")
    config["train"] = train
    return config
