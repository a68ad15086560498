"""Shared fixtures for the adapter suite: tiny images and annotation sources."""

import json

import numpy as np
import pytest
from PIL import Image

_conformance: list[tuple[str, bool]] = []


def record_conformance(name: str, passed: bool) -> None:
    _conformance.append((name, passed))


def pytest_terminal_summary(terminalreporter):
    if not _conformance:
        return
    terminalreporter.section("adapter conformance")
    for name, passed in _conformance:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}")


VOC_XML = """<annotation>
  <filename>{name}.png</filename>
  <size><width>{w}</width><height>{h}</height><depth>3</depth></size>
{objects}</annotation>
"""

VOC_OBJ = """  <object><name>{cls}</name><bndbox><xmin>{x1}</xmin><ymin>{y1}</ymin><xmax>{x2}</xmax><ymax>{y2}</ymax></bndbox></object>
"""


def write_voc_xml(path, name, w, h, objects):
    """objects: list of (class_name, x1, y1, x2, y2)."""
    body = "".join(
        VOC_OBJ.format(cls=c, x1=x1, y1=y1, x2=x2, y2=y2) for c, x1, y1, x2, y2 in objects
    )
    path.write_text(VOC_XML.format(name=name, w=w, h=h, objects=body))


# fixtures hand these helpers to tests instead of a "from conftest import"
# so the two test trees never fight over a shared conftest module name
@pytest.fixture(scope="session")
def voc_writer():
    return write_voc_xml


@pytest.fixture(scope="session")
def conformance():
    return record_conformance


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    """Two deterministic 64x48 PNGs named im1/im2."""
    d = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(7)
    for name in ("im1", "im2"):
        arr = rng.integers(0, 255, size=(48, 64, 3), dtype=np.uint8)
        Image.fromarray(arr).save(d / f"{name}.png")
    return d


@pytest.fixture(scope="session")
def voc_dir(tmp_path_factory):
    """VOC XML annotations matching image_dir: cat+person in im1, sheep+dog in im2."""
    d = tmp_path_factory.mktemp("voc")
    write_voc_xml(d / "im1.xml", "im1", 64, 48,
                  [("cat", 4, 4, 30, 40), ("person", 33, 8, 60, 44)])
    write_voc_xml(d / "im2.xml", "im2", 64, 48,
                  [("sheep", 2, 2, 20, 20), ("dog", 25, 10, 62, 46)])
    return d


@pytest.fixture(scope="session")
def coco_path(tmp_path_factory):
    d = tmp_path_factory.mktemp("coco")
    doc = {
        "images": [
            {"id": 11, "file_name": "im1.png", "width": 64, "height": 48},
            {"id": 22, "file_name": "im2.png", "width": 64, "height": 48},
        ],
        "annotations": [
            {"id": 1, "image_id": 11, "category_id": 3, "bbox": [10, 10, 20, 30]},
            {"id": 2, "image_id": 22, "category_id": 9, "bbox": [5, 5, 40, 40]},
        ],
        "categories": [{"id": 3, "name": "cat"}, {"id": 9, "name": "dog"}],
    }
    p = d / "instances.json"
    p.write_text(json.dumps(doc))
    return p
