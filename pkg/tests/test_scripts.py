import pytest

from scriptpool.errors import AmbiguousScriptError, UnknownScriptError
from scriptpool.scripts import CYRILLIC, INDIC, LATIN, ScriptRegistry, detect_script


def test_basic_latin():
    assert detect_script("hello world") == LATIN


def test_cyrillic_block():
    assert detect_script("мир") == CYRILLIC


def test_telugu_block():
    assert detect_script("తోటి") == INDIC


def test_devanagari_and_bengali_count_as_indic():
    assert detect_script("नमस्ते") == INDIC
    assert detect_script("বাংলা") == INDIC


def test_ascii_punctuation_and_digits_are_neutral():
    assert detect_script("мир 123, мир!") == CYRILLIC


def test_tie_is_ambiguous():
    with pytest.raises(AmbiguousScriptError):
        detect_script("ab мы")  # two letters each


def test_ten_percent_secondary_rejected():
    text = "слово " * 3 + "word"  # 4 latin letters of 19 total
    with pytest.raises(AmbiguousScriptError):
        detect_script(text)


def test_minor_secondary_below_threshold_ok():
    # one latin letter among many cyrillic ones stays under 10%
    assert detect_script("словослово" * 2 + "x") == CYRILLIC


def test_unknown_codepoint_rejected():
    with pytest.raises(UnknownScriptError):
        detect_script("日本語")


def test_no_letters_rejected():
    with pytest.raises(UnknownScriptError):
        detect_script("123 456 !")


def test_empty_text_rejected():
    with pytest.raises(ValueError):
        detect_script("")


def test_registry_extension():
    reg = ScriptRegistry()
    greek = reg.register("greek", [(0x0370, 0x03FF)])
    assert detect_script("λόγος", reg) == greek
    assert reg.name_of(greek) == "greek"
    assert reg.id_of("greek") == greek
