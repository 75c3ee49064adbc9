"""
Skeleton Schema
===============
Joint names and the body tree (joints -> limbs -> arms/legs/trunk -> body).

The default schema is the 24-joint SMPL skeleton. Other skeletons are
described by a TOML schema file:

    joints = ["pelvis", "left_hip", ...]

    [limbs]
    trunk = [0, 3, 6]
    left_leg = [1, 4]

    [groups]
    legs = ["left_leg"]
    trunk = ["trunk"]
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path

from motenc.errors import ConfigError, ParameterError

SMPL_JOINTS = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
)

SMPL_LIMBS = (
    ("trunk", (0, 3, 6, 9, 12, 15)),
    ("left_arm", (13, 16, 18, 20, 22)),
    ("right_arm", (14, 17, 19, 21, 23)),
    ("left_leg", (1, 4, 7, 10)),
    ("right_leg", (2, 5, 8, 11)),
)

SMPL_GROUPS = (
    ("arms", ("left_arm", "right_arm")),
    ("legs", ("left_leg", "right_leg")),
    ("trunk", ("trunk",)),
)

GROUP_NAMES = ("arms", "legs", "trunk")


@dataclass
class HierarchySpec:
    """
    Body tree used to build the masked encoder.

    ``node_widths`` are the unit counts per node at each level:
    (joint node, limb node, group node, body).
    """

    num_joints: int = 24
    limbs: tuple = SMPL_LIMBS
    groups: tuple = SMPL_GROUPS
    node_widths: tuple = (10, 30, 60, 300)

    def __post_init__(self):
        self.limbs = tuple((str(name), tuple(int(j) for j in joints)) for name, joints in self.limbs)
        self.groups = tuple((str(name), tuple(str(l) for l in limbs)) for name, limbs in self.groups)
        self.node_widths = tuple(int(w) for w in self.node_widths)

    def problems(self):
        """List every structural problem; empty when the tree is valid."""
        found = []
        covered = sorted(j for _, joints in self.limbs for j in joints)
        if covered != list(range(self.num_joints)):
            found.append(f"limb joint lists must partition [0, {self.num_joints})")

        limb_names = [name for name, _ in self.limbs]
        if len(set(limb_names)) != len(limb_names):
            found.append("limb names must be unique")
        grouped = [limb for _, limbs in self.groups for limb in limbs]
        for limb in limb_names:
            if grouped.count(limb) != 1:
                found.append(f"limb '{limb}' must appear in exactly one group")
        for limb in grouped:
            if limb not in limb_names:
                found.append(f"group refers to unknown limb '{limb}'")
        for name, limbs in self.groups:
            if not limbs:
                found.append(f"group '{name}' is empty")

        if len(self.node_widths) != 4 or min(self.node_widths) < 1:
            found.append("node_widths must be four positive counts")
        return found

    def validate(self):
        found = self.problems()
        if found:
            raise ConfigError(found)
        return self

    def limb_of_joint(self):
        """Joint index -> limb index."""
        owner = {}
        for limb_index, (_, joints) in enumerate(self.limbs):
            for joint in joints:
                owner[joint] = limb_index
        return [owner[j] for j in range(self.num_joints)]

    def group_of_limb(self):
        """Limb index -> group index."""
        names = [name for name, _ in self.limbs]
        owner = {}
        for group_index, (_, limbs) in enumerate(self.groups):
            for limb in limbs:
                owner[names.index(limb)] = group_index
        return [owner[i] for i in range(len(self.limbs))]

    def limb_joints(self, limb):
        for name, joints in self.limbs:
            if name == limb:
                return joints
        raise ParameterError(f"unknown limb '{limb}', expected one of {[n for n, _ in self.limbs]}")

    def to_dict(self):
        return {
            "num_joints": self.num_joints,
            "limbs": [[name, list(joints)] for name, joints in self.limbs],
            "groups": [[name, list(limbs)] for name, limbs in self.groups],
            "node_widths": list(self.node_widths),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            num_joints=int(data["num_joints"]),
            limbs=tuple((n, tuple(j)) for n, j in data["limbs"]),
            groups=tuple((n, tuple(l)) for n, l in data["groups"]),
            node_widths=tuple(data.get("node_widths", (10, 30, 60, 300))),
        )

    @classmethod
    def single_limb(cls, num_joints, node_widths=(10, 30, 60, 300)):
        """Degenerate tree: one limb holding every joint."""
        return cls(
            num_joints=num_joints,
            limbs=(("body", tuple(range(num_joints))),),
            groups=(("trunk", ("body",)),),
            node_widths=node_widths,
        )


@dataclass
class SkeletonSchema:
    """Joint names plus the hierarchy they are organised in."""

    joint_names: tuple = SMPL_JOINTS
    hierarchy: HierarchySpec = field(default_factory=HierarchySpec)

    def __post_init__(self):
        self.joint_names = tuple(self.joint_names)
        if len(set(self.joint_names)) != len(self.joint_names):
            raise ConfigError("joint names must be unique")
        if len(self.joint_names) != self.hierarchy.num_joints:
            raise ConfigError(
                f"schema has {len(self.joint_names)} joints but the hierarchy expects "
                f"{self.hierarchy.num_joints}"
            )

    @property
    def num_joints(self):
        return len(self.joint_names)

    @property
    def limb_names(self):
        return [name for name, _ in self.hierarchy.limbs]

    def limb_joints(self, limb):
        return self.hierarchy.limb_joints(limb)

    @classmethod
    def from_joint_names(cls, names):
        """
        Schema for a list of joint names.

        The default SMPL list gets the default tree; anything else gets a
        single-limb tree (load a schema file for a real hierarchy).
        """
        names = tuple(names)
        if names == SMPL_JOINTS:
            return cls()
        return cls(names, HierarchySpec.single_limb(len(names)))


def default_schema():
    return SkeletonSchema()


def load_schema(path):
    """
    Load a skeleton schema from a TOML file.

    Args:
        path (str | Path): Schema file

    Returns:
        SkeletonSchema: Validated schema
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}")

    problems = []
    joints = data.get("joints")
    if not joints:
        problems.append(f"{path}: 'joints' list is missing")
    limbs = data.get("limbs", {})
    groups = data.get("groups", {})
    if not limbs:
        problems.append(f"{path}: [limbs] table is missing")
    if not groups:
        problems.append(f"{path}: [groups] table is missing")
    if problems:
        raise ConfigError(problems)

    hierarchy = HierarchySpec(
        num_joints=len(joints),
        limbs=tuple(limbs.items()),
        groups=tuple(groups.items()),
        node_widths=tuple(data.get("node_widths", (10, 30, 60, 300))),
    ).validate()
    return SkeletonSchema(tuple(joints), hierarchy)
