import itertools

import numpy as np
import pytest

from xplain.models import ExternalTableModel
from xplain.schema import Feature, FeatureSchema
from xplain.tree import DecisionTree, Split, TreeNode


@pytest.fixture
def mixed_schema():
    return FeatureSchema(
        features=(
            Feature("income", "numeric", (0.0, 100.0)),
            Feature("age", "numeric", (18.0, 90.0)),
        ),
        target_name="approved",
        classes=("0", "1"),
    )


@pytest.fixture
def cat_schema():
    return FeatureSchema(
        features=(
            Feature("size", "numeric", (0.0, 10.0)),
            Feature("color", "categorical", ("a", "b")),
        ),
        target_name="y",
        classes=("A", "B"),
    )


def make_loan_schema():
    """income/debt/age with a binary approval target."""
    return FeatureSchema(
        features=(
            Feature("income", "numeric", (0.0, 100.0)),
            Feature("debt", "numeric", (0.0, 20.0)),
            Feature("age", "numeric", (18.0, 90.0)),
        ),
        target_name="approved",
        classes=("no", "yes"),
    )


def make_loan_model():
    """Hand-built tree: approve iff income > 45 and debt <= 10."""
    schema = make_loan_schema()
    nodes = (
        TreeNode(id=0, depth=0, split=Split(feature=0, threshold=45.0),
                 children=(1, 2), support=(0, 1, 2, 3), histogram=(2, 2),
                 n_support=4),
        TreeNode(id=1, depth=1, split=None, children=(), support=(0, 1),
                 histogram=(2, 0), n_support=2),
        TreeNode(id=2, depth=1, split=Split(feature=1, threshold=10.0),
                 children=(3, 4), support=(2, 3), histogram=(0, 2), n_support=2),
        TreeNode(id=3, depth=2, split=None, children=(), support=(2,),
                 histogram=(0, 2), n_support=1),
        TreeNode(id=4, depth=2, split=None, children=(), support=(3,),
                 histogram=(2, 0), n_support=1),
    )
    from xplain.models import CartTreeModel
    return CartTreeModel(DecisionTree(schema=schema, nodes=nodes))


def random_table_model(schema, rng):
    """Exhaustive lookup model over a discrete grid of the schema's domains.

    Numeric features are sampled on a fixed 3-point grid; the grid must be
    the only values ever fed to the model.
    """
    grids = []
    for feat in schema.features:
        if feat.is_numeric:
            lo, hi = feat.domain
            grids.append([lo, (lo + hi) / 2, hi])
        else:
            grids.append(list(feat.domain))
    entries = []
    k = schema.n_classes
    for combo in itertools.product(*grids):
        p = rng.dirichlet(np.ones(k))
        entries.append((tuple(combo), [float(v) for v in p]))
    return ExternalTableModel(schema, entries), grids
