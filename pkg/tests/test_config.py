import pytest

from couplersim.config import parse_text
from couplersim.errors import ValidationError


def test_units_convert_to_requested():
    doc = parse_text("[mode Q]\nf = 5295 MHz\nt = 31.5 us\ng = 70\n")
    sec = doc.one("mode")
    assert sec["f"].number("GHz") == pytest.approx(5.295)
    assert sec["t"].number("ns") == pytest.approx(31500)
    assert sec["g"].number("MHz") == 70


def test_lists_and_booleans():
    sec = parse_text("[x]\nv = 1, 2 3 GHz\nb = yes\n").one("x")
    assert sec["v"].numbers("MHz") == [1000, 2000, 3000]
    assert sec["b"].boolean() is True


def test_errors_carry_line_numbers():
    with pytest.raises(ValidationError) as exc:
        parse_text("[x]\na = 1\nbroken line\n")
    assert exc.value.line == 3
    sec = parse_text("[x]\n\nf = 5 us\n").one("x")
    with pytest.raises(ValidationError) as exc:
        sec["f"].number("GHz")
    assert exc.value.line == 3


def test_duplicates_rejected():
    with pytest.raises(ValidationError):
        parse_text("[x]\na = 1\na = 2\n")
    with pytest.raises(ValidationError):
        parse_text("[x]\n[x]\n").one("x")


def test_digest_tracks_text():
    assert parse_text("[x]\na=1\n").digest() != parse_text("[x]\na=2\n").digest()
