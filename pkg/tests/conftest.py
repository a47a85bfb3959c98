import json

import pytest

from kinject.knowledge import default_knowledge_base, parse_knowledge_doc


@pytest.fixture(scope="session")
def kb():
    return default_knowledge_base()


MINIMAL_KB_DOC = {
    "phenotypes": [
        {"id": "consolidation", "display_name": "consolidation in the lower lobe"},
        {"id": "pneumothorax", "display_name": "pneumothorax"},
    ],
    "diseases": [
        {
            "id": "pneumonia",
            "display_name": "Pneumonia",
            "typical": ["consolidation"],
            "excluded": ["pneumothorax"],
        }
    ],
}


@pytest.fixture
def minimal_kb():
    return parse_knowledge_doc(json.loads(json.dumps(MINIMAL_KB_DOC)))


@pytest.fixture
def minimal_kb_file(tmp_path):
    path = tmp_path / "kb.json"
    path.write_text(json.dumps(MINIMAL_KB_DOC), encoding="utf-8")
    return str(path)
