use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use stylox_core::arranger::{build_corpus, builtin_styles, render, CorpusConfig, Split, StyleSpec};
use stylox_core::chart::random_chart;
use stylox_core::codec::Segment;
use stylox_core::metrics::{
    content_preservation, derangement, profile_similarity_matrix, randomized_baseline, reference_profiles,
    style_fit_macro, style_profile, StyleProfile, PROFILE_LEN,
};
use stylox_core::midi_io::TrackSelector;
use stylox_core::{Note, NoteList, Role, TimeSignature};

/// Independent O(n^2) profile: integer twelfths, explicit pair loop.
fn oracle(tracks: &[Vec<(i64, i32)>]) -> Vec<f64> {
    let mut counts = vec![0u64; 24 * 41];
    for notes in tracks {
        for (a, &(ta, pa)) in notes.iter().enumerate() {
            for (b, &(tb, pb)) in notes.iter().enumerate() {
                let (dt, dp) = (tb - ta, pb - pa);
                if a != b && (0..48).contains(&dt) && dp.abs() <= 20 {
                    counts[(dt / 2) as usize * 41 + (dp + 20) as usize] += 1;
                }
            }
        }
    }
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
}

fn to_list(notes: &[(i64, i32)]) -> NoteList {
    NoteList::new(
        notes.iter().map(|&(t, p)| Note::new(p as u8, t as f64 / 12.0, t as f64 / 12.0 + 0.25)),
        TimeSignature::FourFour,
    )
}

fn onsets(max: usize) -> impl Strategy<Value = Vec<(i64, i32)>> {
    prop::collection::vec((0i64..120, 30i32..90), 0..=max)
}

fn segment(notes: &[(i64, i32, i64)]) -> Segment {
    Segment::new(NoteList::new(
        notes.iter().map(|&(t, p, d)| Note::new(p as u8, t as f64 / 12.0, (t + d) as f64 / 12.0)),
        TimeSignature::FourFour,
    ))
}

fn chordal_segment() -> impl Strategy<Value = Vec<(i64, i32, i64)>> {
    prop::collection::vec((0i64..360, 36i32..84, 6i64..24), 1..24)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn profile_matches_pair_enumeration(a in onsets(20), b in onsets(6)) {
        let got = style_profile([&to_list(&a), &to_list(&b)]);
        prop_assert_eq!(got.values.len(), PROFILE_LEN);
        prop_assert_eq!(got.values, oracle(&[a, b]));
    }

    #[test]
    fn profile_ignores_transposition_and_time_shift(a in onsets(20), k in -10i32..10, shift in 0i64..48) {
        let base = style_profile([&to_list(&a)]);
        let moved: Vec<(i64, i32)> = a.iter().map(|&(t, p)| (t + shift, p + k)).collect();
        prop_assert_eq!(style_profile([&to_list(&moved)]), base);
    }

    #[test]
    fn profile_ignores_track_order(a in onsets(10), b in onsets(10)) {
        let (la, lb) = (to_list(&a), to_list(&b));
        prop_assert_eq!(style_profile([&la, &lb]), style_profile([&lb, &la]));
    }

    #[test]
    fn content_preservation_identity_symmetry_transposition(a in chordal_segment(), b in chordal_segment(), k in -12i32..12) {
        let (sa, sb) = (segment(&a), segment(&b));
        prop_assert!((content_preservation(&sa, &sa).unwrap() - 1.0).abs() < 1e-12);
        let ab = content_preservation(&sa, &sb).unwrap();
        prop_assert!((ab - content_preservation(&sb, &sa).unwrap()).abs() < 1e-12);
        let moved = content_preservation(&sa.transposed(k).unwrap(), &sb.transposed(k).unwrap()).unwrap();
        prop_assert!((ab - moved).abs() < 1e-12);
    }

    #[test]
    fn tritone_against_itself_drops(root in 40i32..70, minor in any::<bool>()) {
        let third = if minor { 3 } else { 4 };
        let triad: Vec<(i64, i32, i64)> = [0, third, 7].iter().map(|&i| (0, root + i, 384)).collect();
        let s = segment(&triad);
        let cp = content_preservation(&s, &s.transposed(6).unwrap()).unwrap();
        prop_assert!(cp < 1.0);
        prop_assert!(cp.abs() < 1e-12, "pitch-class sets disjoint, got {}", cp);
    }

    #[test]
    fn derangement_is_a_bijection_without_fixed_points(n in 2usize..40, seed in any::<u64>()) {
        let p = derangement(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut sorted = p.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        prop_assert!(p.iter().enumerate().all(|(i, &j)| i != j));
    }
}

#[test]
fn style_fit_of_permuted_set_is_unchanged() {
    let segs: Vec<Segment> = (0..6).map(|i| segment(&[(i * 12, 40 + i as i32, 12), (i * 12 + 6, 47, 6), (90, 52 - i as i32, 12)])).collect();
    let reference = style_profile(segs.iter().map(|s| &s.notes));
    let perm = &randomized_baseline(&BTreeMap::from([("x".to_string(), segs.len())]), 3)["x"];
    let permuted: Vec<&Segment> = perm.iter().map(|&i| &segs[i]).collect();
    assert_eq!(style_fit_macro(permuted, &reference), style_fit_macro(&segs, &reference));
}

fn family_styles() -> Vec<StyleSpec> {
    builtin_styles()
}

/// Per-style bass profile of 12 random 8-bar charts.
fn bass_profiles(styles: &[StyleSpec], seed: u64) -> BTreeMap<String, StyleProfile> {
    styles
        .iter()
        .map(|s| {
            let tracks: Vec<NoteList> = (0..12)
                .map(|i| render(&random_chart(seed + i, 8, TimeSignature::FourFour), s, Role::Bass, seed * 31 + i).unwrap())
                .collect();
            (s.name.clone(), style_profile(&tracks))
        })
        .collect()
}

#[test]
fn arranger_output_fits_its_own_family_best() {
    let styles = family_styles();
    let refs = bass_profiles(&styles, 1000);
    let outputs = bass_profiles(&styles, 2000);
    for s in &styles {
        let own = outputs[&s.name].cosine(&refs[&s.name]);
        for other in styles.iter().filter(|o| o.family != s.family) {
            let cross = outputs[&s.name].cosine(&refs[&other.name]);
            assert!(own >= cross, "{} fits {} ({cross:.3}) better than itself ({own:.3})", s.name, other.name);
        }
    }
}

#[test]
fn builtin_families_cluster_together() {
    let styles = family_styles();
    let m = profile_similarity_matrix(&bass_profiles(&styles, 7)).unwrap();
    let family: Vec<&str> =
        m.names.iter().map(|n| styles.iter().find(|s| &s.name == n).unwrap().family.as_str()).collect();
    let (mut within, mut cross) = (Vec::new(), Vec::new());
    for i in 0..family.len() {
        assert!((m.matrix[i][i] - 1.0).abs() < 1e-12);
        for j in 0..family.len() {
            assert!((m.matrix[i][j] - m.matrix[j][i]).abs() < 1e-12);
            if i < j {
                if family[i] == family[j] { &mut within } else { &mut cross }.push(m.matrix[i][j]);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&within) > mean(&cross) + 0.1, "within {:.3} cross {:.3}", mean(&within), mean(&cross));
}

#[test]
fn random_pairing_loses_content() {
    let charts: Vec<_> = (0..12).map(|i| (format!("c{i}"), random_chart(500 + i, 16, TimeSignature::FourFour))).collect();
    let styles: Vec<StyleSpec> = builtin_styles().into_iter().take(4).collect();
    let cfg = CorpusConfig { k_styles_per_song: 2, test_songs: 12, ..CorpusConfig::default() };
    let corpus = build_corpus(&charts[..], &styles, &cfg).unwrap();
    let pairs: Vec<_> = corpus.examples_in(Split::Test).collect();
    let sel = TrackSelector::Bass;
    let refs: Vec<Segment> = pairs.iter().map(|e| corpus.segment(e.target, sel, e.segment_index)).collect();
    let srcs: Vec<Segment> = pairs.iter().map(|e| corpus.segment(e.source, sel, e.segment_index)).collect();
    let perm = derangement(refs.len(), &mut ChaCha8Rng::seed_from_u64(9));
    let mean = |f: &dyn Fn(usize) -> f64| (0..refs.len()).map(f).sum::<f64>() / refs.len() as f64;
    let identity = mean(&|i| content_preservation(&refs[i], &srcs[i]).unwrap());
    let random = mean(&|i| content_preservation(&refs[perm[i]], &srcs[i]).unwrap());
    assert!(random < identity, "random {random:.3} vs aligned {identity:.3}");
    assert_eq!(reference_profiles(&corpus, sel).len(), 0, "no training split here");
}
