import textwrap
from pathlib import Path

import pytest

from symscribe.lexicon import Lexicon, load_lexicon

DATA_DIR = Path(__file__).parent.parent / "src" / "symscribe" / "data"

TINY_LEXICON = textwrap.dedent(
    """\
    CAT\tc1\tCat One
    CAT\tc2\tCat Two
    CAT\tc3\tCat Three
    SYN\tK1\tfatigue\tc1\tfatigue
    SYN\tK1\tfatigue\tc1\ttiredness
    SYN\tK1\tfatigue\tc1\texhaustion
    SYN\tK2\theadache\tc2\theadache
    SYN\tK2\theadache\tc2\thead pain
    SYN\tK3\tfever\tc3\tfever
    SYN\tK3\tfever\tc3\tfebrile
    SYN\tK3\tfever\tc3\tpyrexia
    SYN\tK4\tcough\tc1\tcough
    SYN\tK4\tcough\tc1\tcoughing
    SYN\tK5\tchills\tc3\tchills
    SYN\tK5\tchills\tc3\tshivering
    """
)


@pytest.fixture()
def tiny_lexicon_path(tmp_path: Path) -> Path:
    path = tmp_path / "tiny_lexicon.tsv"
    path.write_text(TINY_LEXICON, encoding="utf-8")
    return path


@pytest.fixture()
def tiny_lexicon(tiny_lexicon_path: Path) -> Lexicon:
    return load_lexicon(tiny_lexicon_path)


@pytest.fixture(scope="session")
def demo_lexicon_path() -> Path:
    return DATA_DIR / "demo_lexicon.tsv"


@pytest.fixture(scope="session")
def demo_lexicon(demo_lexicon_path: Path) -> Lexicon:
    return load_lexicon(demo_lexicon_path)


NOTES_CSV = textwrap.dedent(
    """\
    note_id,site_id,text
    n1,siteA,"HPI: Patient reports fatigue and shortness of breath. Denies fever."
    n2,siteB,"ROS: negative for fever, chills, and fatigue. ASSESSMENT: history of migraines."
    n3,siteC,"PLAN: ibuprofen as needed for headache. Reports chest pain."
    """
)


@pytest.fixture()
def notes_csv_path(tmp_path: Path) -> Path:
    path = tmp_path / "notes.csv"
    path.write_text(NOTES_CSV, encoding="utf-8")
    return path


@pytest.fixture()
def demo_run(tmp_path: Path, notes_csv_path: Path):
    """A completed pipeline run over the three demo notes."""
    from symscribe.pipeline import PipelineConfig, run

    out_dir = tmp_path / "run"
    config = PipelineConfig(output_dir=out_dir)
    summary = run(config, notes_csv_path)
    return out_dir, summary
