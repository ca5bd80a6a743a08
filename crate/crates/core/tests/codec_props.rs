use proptest::prelude::*;
use stylox_core::codec::{
    decode_events, detokenize, encode_events, to_piano_roll, tokenize, Segment, Token, TokenVocab, MAX_TIME_SHIFT,
};
use stylox_core::{Note, NoteList, TimeSignature};

fn grid_segment() -> impl Strategy<Value = Segment> {
    prop::collection::vec((20u8..108, 0i64..384, 1i64..96), 0..40).prop_map(|raw| {
        let mut notes: Vec<Note> = Vec::new();
        for (p, on, len) in raw {
            let off = (on + len).min(384);
            let (onset, offset) = (on as f64 / 12.0, off as f64 / 12.0);
            if notes.iter().all(|n| n.pitch != p || n.offset <= onset || n.onset >= offset) {
                notes.push(Note::new(p, onset, offset));
            }
        }
        Segment::new(NoteList::new(notes, TimeSignature::FourFour))
    })
}

proptest! {
    #[test]
    fn encode_decode_round_trip(seg in grid_segment(), compress in any::<bool>()) {
        let seq = encode_events(&seg, compress);
        let decoded = decode_events(&seq);
        prop_assert_eq!(decoded.anomalies.total(), 0);
        prop_assert_eq!(to_piano_roll(&decoded.segment), to_piano_roll(&seg));
        prop_assert_eq!(&decoded.segment, &seg);
    }

    #[test]
    fn token_ids_are_in_vocabulary_and_invertible(seg in grid_segment(), compress in any::<bool>()) {
        let seq = encode_events(&seg, compress);
        let ids = tokenize(&seq);
        prop_assert!(ids.iter().all(|&i| (i as usize) < TokenVocab::SIZE));
        prop_assert_eq!(ids[0], TokenVocab::BOS);
        prop_assert_eq!(*ids.last().unwrap(), TokenVocab::EOS);
        prop_assert_eq!(detokenize(&ids).unwrap(), seq.clone());
        for t in seq.events() {
            if let Token::TimeShift(d) = t {
                prop_assert!((1..=MAX_TIME_SHIFT).contains(d));
            }
        }
    }

    #[test]
    fn transposition_shifts_pitch_arguments(seg in grid_segment(), k in -12i32..12) {
        let moved = seg.transposed(k).unwrap();
        let shift = |t: &Token| match *t {
            Token::NoteOn(p) => Token::NoteOn((p as i32 + k) as u8),
            Token::NoteOff(p) => Token::NoteOff((p as i32 + k) as u8),
            other => other,
        };
        let expected: Vec<Token> = encode_events(&seg, true).events().map(shift).collect();
        let actual: Vec<Token> = encode_events(&moved, true).events().copied().collect();
        prop_assert_eq!(actual, expected);
    }

    #[test]
    fn roll_has_four_columns_per_beat(seg in grid_segment()) {
        let roll = to_piano_roll(&seg);
        prop_assert_eq!(roll.columns(), 128);
        prop_assert_eq!(roll.pitches(), 128);
        prop_assert_eq!(roll.columns(), 4 * seg.beats() as usize);
    }
}
