"""Quick check of the Python bindings. Build first with `maturin develop`."""

import json
import sys

import violin_fingerboard_py as vf

SCORE = """<?xml version="1.0"?>
<score-partwise version="3.1">
<part-list><score-part id="P1"><part-name>Violin</part-name></score-part></part-list>
<part id="P1"><measure number="1">
<attributes><divisions>2</divisions></attributes>
<direction><sound tempo="120"/></direction>
<note><rest/><duration>5</duration></note>
<note><pitch><step>B</step><alter>-1</alter><octave>3</octave></pitch><duration>2</duration></note>
<note><pitch><step>E</step><octave>5</octave></pitch><duration>1</duration></note>
</measure></part></score-partwise>
"""


def main():
    p = vf.lookup("Bb3")
    assert (p.string, p.finger, p.position_label) == ("G", 2, "2"), p
    assert vf.lookup(62).position_label == "open"
    assert vf.lookup("G#6") is None
    assert vf.normalize_name("Bb3") == "A#3"
    assert vf.pitch_to_midi("C", 0, 4) == 60
    assert vf.midi_to_sharp_name(55) == "G3"
    assert len(vf.all_placements()) == 64
    assert len(vf.table_dump().splitlines()) == 37
    assert vf.coverage([55, 93]) == (2, 1, 0.5)

    t = vf.parse_musicxml(SCORE)
    names = [n.note_name for n in t.notes]
    assert names == ["A#3", "E5"], names
    assert t.notes[0].start_time == 1.25
    assert json.loads(t.to_json())[0]["start_time"] == 1.25

    report = vf.evaluate(t, t)
    assert report["note_accuracy"] == 1.0 and report["fingerboard_accuracy"] == 1.0

    shifted = vf.Timeline([vf.Note(n.midi, n.start_time + 0.04, n.duration) for n in t.notes])
    assert vf.evaluate(shifted, t)["matched"] == 2
    assert vf.evaluate(shifted, t, tolerance=0.03)["matched"] == 0

    png = vf.render_frame_png(t, 1.3, width=640, height=360)
    assert png[:8] == b"\x89PNG\r\n\x1a\n"
    assert t.total_duration == 2.0
    assert vf.frame_count(t.total_duration, 30) == 90

    try:
        vf.parse_musicxml("<score-partwise><part")
    except vf.ScoreError:
        pass
    else:
        raise AssertionError("malformed XML accepted")

    print("python bindings ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
