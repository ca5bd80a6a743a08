use proptest::prelude::*;
use stylox_core::midi_io::{extract_track, read_midi, write_midi, Song, TrackSelector};
use stylox_core::{Note, NoteList, Role, TimeSignature};

/// Notes on the twelfths grid; same-pitch notes never overlap.
fn grid_notes(max: usize) -> impl Strategy<Value = Vec<Note>> {
    prop::collection::vec((24u8..100, 0i64..384, 1i64..48), 0..max).prop_map(|raw| {
        let mut notes: Vec<Note> = Vec::new();
        for (p, on, len) in raw {
            let (onset, offset) = (on as f64 / 12.0, (on + len) as f64 / 12.0);
            if notes.iter().all(|n| n.pitch != p || n.offset <= onset || n.onset >= offset) {
                notes.push(Note::new(p, onset, offset));
            }
        }
        notes
    })
}

fn song(ts: TimeSignature, tracks: Vec<(Role, Vec<Note>)>) -> Song {
    let mut s = Song::new(ts);
    for (i, (role, notes)) in tracks.into_iter().enumerate() {
        s.add_track(format!("{role} {i}"), role, NoteList::new(notes, ts));
    }
    s
}

proptest! {
    #[test]
    fn read_after_write_is_identity(
        bass in grid_notes(30),
        piano in grid_notes(40),
        drums in grid_notes(10),
        twelve_eight in any::<bool>(),
    ) {
        let ts = if twelve_eight { TimeSignature::TwelveEight } else { TimeSignature::FourFour };
        let original = song(ts, vec![(Role::Bass, bass), (Role::Piano, piano), (Role::Drums, drums)]);
        let back = read_midi(&write_midi(&original)).unwrap();
        prop_assert_eq!(back, original);
    }

    #[test]
    fn extracted_all_counts_non_drum_notes(bass in grid_notes(20), piano in grid_notes(20), drums in grid_notes(10)) {
        let s = song(TimeSignature::FourFour, vec![(Role::Bass, bass.clone()), (Role::Piano, piano.clone()), (Role::Drums, drums)]);
        let all = extract_track(&read_midi(&write_midi(&s)).unwrap(), TrackSelector::All);
        prop_assert_eq!(all.len(), bass.len() + piano.len());
        prop_assert!(all.notes().iter().all(|n| n.offset > n.onset));
    }
}
