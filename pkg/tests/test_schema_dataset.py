import json

import pytest

from xplain.dataset import dataset_to_csv, load_dataset
from xplain.errors import DataError, SchemaError
from xplain.schema import Feature, FeatureSchema, instance_from_payload

SCHEMA_DOC = {
    "features": [
        {"name": "income", "kind": "numeric", "domain": [0, 100]},
        {"name": "age", "kind": "numeric", "domain": [18, 90]},
    ],
    "target": {"name": "approved", "classes": ["0", "1"]},
}


def schema_bytes(extra=None):
    doc = dict(SCHEMA_DOC)
    if extra:
        doc.update(extra)
    return json.dumps(doc).encode()


def test_load_three_row_csv():
    csv = b"income,age,approved\n10,30,0\n50,40,1\n90,70,1\n"
    data = load_dataset(csv, schema_bytes())
    assert len(data) == 3
    assert data.labels == (0, 1, 1)
    assert data.instances[1].values == (50.0, 40.0)
    assert data.masks is None


def test_out_of_domain_value_reports_row():
    csv = b"income,age,approved\n10,30,0\n200,40,1\n"
    with pytest.raises(DataError, match="row 2"):
        load_dataset(csv, schema_bytes())


def test_unknown_column_rejected():
    csv = b"income,age,bonus,approved\n10,30,1,0\n"
    with pytest.raises(DataError, match="bonus"):
        load_dataset(csv, schema_bytes())


def test_row_length_mismatch_reports_row():
    csv = b"income,age,approved\n10,30,0\n10,30\n"
    with pytest.raises(DataError, match="row 2"):
        load_dataset(csv, schema_bytes())


def test_mask_column_parsed():
    csv = b"income,age,approved,mask\n10,30,0,income;age\n50,40,1,income\n"
    data = load_dataset(csv, schema_bytes({"mask_column": "mask"}))
    assert data.masks[0] == {0, 1}
    assert data.masks[1] == {0}


def test_unknown_class_label_rejected():
    csv = b"income,age,approved\n10,30,2\n"
    with pytest.raises(DataError, match="row 1"):
        load_dataset(csv, schema_bytes())


def test_csv_round_trip():
    csv = b"income,age,approved,mask\n10.5,30,0,income\n50,40.25,1,age\n"
    data = load_dataset(csv, schema_bytes({"mask_column": "mask"}))
    text = dataset_to_csv(data)
    again = load_dataset(text.encode(), schema_bytes({"mask_column": "mask"}))
    assert again.instances == data.instances
    assert again.labels == data.labels
    assert again.masks == data.masks


def test_schema_invariants():
    with pytest.raises(SchemaError):
        Feature("x", "numeric", (5.0, 1.0))  # lo > hi
    with pytest.raises(SchemaError):
        Feature("x", "categorical", ())
    with pytest.raises(SchemaError):
        FeatureSchema(
            features=(Feature("x", "numeric", (0.0, 1.0)),
                      Feature("x", "numeric", (0.0, 1.0))),
            target_name="y", classes=("a", "b"))


def test_schema_json_round_trip():
    schema = FeatureSchema.from_dict(SCHEMA_DOC)
    assert FeatureSchema.from_json(schema.to_json()) == schema


def test_instance_payload_forms(mixed_schema):
    by_list = instance_from_payload(mixed_schema, [10, 30])
    by_name = instance_from_payload(mixed_schema, {"income": 10, "age": 30})
    assert by_list == by_name
    with pytest.raises(SchemaError):
        instance_from_payload(mixed_schema, {"income": 10})
    with pytest.raises(SchemaError):
        instance_from_payload(mixed_schema, [10, 30, 1])
