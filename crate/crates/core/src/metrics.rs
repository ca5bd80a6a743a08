//! Objective evaluation: chroma-based content preservation and the
//! onset-pair style profile used for style fit.

use crate::arranger::{PairedCorpus, Split};
use crate::codec::Segment;
use crate::midi_io::TrackSelector;
use crate::music::NoteList;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const CHROMA_FRAMES_PER_BEAT: usize = 12;
pub const SMOOTH_WINDOW: usize = 24;
pub const SMOOTH_STRIDE: usize = 12;

pub const PROFILE_TIME_BINS: usize = 24;
pub const PROFILE_INTERVAL_BINS: usize = 41;
pub const PROFILE_LEN: usize = PROFILE_TIME_BINS * PROFILE_INTERVAL_BINS;
const PROFILE_BINS_PER_BEAT: f64 = 6.0;
const MAX_INTERVAL: i32 = 20;
const MAX_ONSET_GAP: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("segment lengths differ: {0} vs {1} beats")]
    LengthMismatch(u32, u32),
    #[error("need at least {0} profiles")]
    TooFewProfiles(usize),
}

/// Snap values within 1e-6 of an integer; keeps grid-aligned times exact.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-6 {
        r
    } else {
        x
    }
}

/// Smoothed chroma: one 12-dim frame per beat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChromaSequence {
    pub frames: Vec<[f64; 12]>,
}

/// Count-weighted chroma at 12 frames per beat: frame f, class k counts the
/// notes of pitch class k sounding at any point of [f/12, (f+1)/12).
pub fn raw_chroma(seg: &Segment) -> Vec<[f64; 12]> {
    let frames = seg.beats() as usize * CHROMA_FRAMES_PER_BEAT;
    let mut out = vec![[0.0; 12]; frames];
    for n in seg.notes.notes() {
        let on = snap(n.onset * CHROMA_FRAMES_PER_BEAT as f64);
        let off = snap(n.offset * CHROMA_FRAMES_PER_BEAT as f64);
        let first = on.floor().max(0.0) as usize;
        let last = (off.ceil() as usize).min(frames);
        for frame in out.iter_mut().take(last).skip(first) {
            frame[(n.pitch % 12) as usize] += 1.0;
        }
    }
    out
}

/// Chroma averaged over 24-frame windows at a 12-frame stride; only windows
/// lying fully inside the segment are kept.
pub fn chroma(seg: &Segment) -> ChromaSequence {
    let raw = raw_chroma(seg);
    let mut frames = Vec::new();
    let mut start = 0;
    while start + SMOOTH_WINDOW <= raw.len() {
        let mut acc = [0.0; 12];
        for f in &raw[start..start + SMOOTH_WINDOW] {
            for k in 0..12 {
                acc[k] += f[k];
            }
        }
        frames.push(acc.map(|v| v / SMOOTH_WINDOW as f64));
        start += SMOOTH_STRIDE;
    }
    ChromaSequence { frames }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean frame-wise cosine similarity of smoothed chroma. A frame silent on
/// one side scores 0, silent on both sides 1.
pub fn content_preservation(out: &Segment, source: &Segment) -> Result<f64, MetricsError> {
    if out.beats() != source.beats() {
        return Err(MetricsError::LengthMismatch(out.beats(), source.beats()));
    }
    let (a, b) = (chroma(out), chroma(source));
    if a.frames.is_empty() {
        return Ok(1.0);
    }
    let total: f64 = a
        .frames
        .iter()
        .zip(&b.frames)
        .map(|(x, y)| {
            let zx = x.iter().all(|&v| v == 0.0);
            let zy = y.iter().all(|&v| v == 0.0);
            match (zx, zy) {
                (true, true) => 1.0,
                (true, false) | (false, true) => 0.0,
                _ => cosine(x, y),
            }
        })
        .sum();
    Ok(total / a.frames.len() as f64)
}

/// Flattened, L1-normalized histogram of (onset gap, interval) over ordered
/// note pairs, time-bin major: index = time_bin * 41 + (interval + 20).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleProfile {
    pub values: Vec<f64>,
}

impl StyleProfile {
    pub fn zero() -> Self {
        StyleProfile { values: vec![0.0; PROFILE_LEN] }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn get(&self, time_bin: usize, interval_bin: usize) -> f64 {
        self.values[time_bin * PROFILE_INTERVAL_BINS + interval_bin]
    }

    pub fn cosine(&self, other: &StyleProfile) -> f64 {
        cosine(&self.values, &other.values)
    }
}

/// Raw pair counts; profiles of several tracks pool by adding counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileAccumulator {
    counts: Vec<f64>,
}

impl Default for ProfileAccumulator {
    fn default() -> Self {
        ProfileAccumulator { counts: vec![0.0; PROFILE_LEN] }
    }
}

impl ProfileAccumulator {
    /// Add the pairs of one track. Pairs never span two calls.
    pub fn add(&mut self, track: &NoteList) {
        let mut onsets: Vec<(f64, i32)> = track.notes().iter().map(|n| (n.onset, n.pitch as i32)).collect();
        onsets.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut group_start = 0;
        for i in 0..onsets.len() {
            if onsets[i].0 > onsets[group_start].0 {
                group_start = i;
            }
            let (ta, pa) = onsets[i];
            // every b with t_b >= t_a starts at the first note sharing t_a's onset
            for (j, &(tb, pb)) in onsets.iter().enumerate().skip(group_start) {
                let gap = snap((tb - ta) * PROFILE_BINS_PER_BEAT);
                if gap >= MAX_ONSET_GAP * PROFILE_BINS_PER_BEAT {
                    break;
                }
                let interval = pb - pa;
                if j == i || interval.abs() > MAX_INTERVAL {
                    continue;
                }
                let bin = gap.floor() as usize * PROFILE_INTERVAL_BINS + (interval + MAX_INTERVAL) as usize;
                self.counts[bin] += 1.0;
            }
        }
    }

    pub fn merge(&mut self, other: &ProfileAccumulator) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn profile(&self) -> StyleProfile {
        let total = self.total();
        if total == 0.0 {
            return StyleProfile::zero();
        }
        StyleProfile { values: self.counts.iter().map(|c| c / total).collect() }
    }
}

/// Style profile pooled over several tracks (typically segments).
pub fn style_profile<'a>(tracks: impl IntoIterator<Item = &'a NoteList>) -> StyleProfile {
    let mut acc = ProfileAccumulator::default();
    for t in tracks {
        acc.add(t);
    }
    acc.profile()
}

pub fn segments_profile<'a>(segments: impl IntoIterator<Item = &'a Segment>) -> StyleProfile {
    style_profile(segments.into_iter().map(|s| &s.notes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleFit {
    pub score: f64,
    /// Set when the outputs had no note pairs at all.
    pub flagged: bool,
}

/// Cosine similarity of the profile pooled over all outputs to the reference.
pub fn style_fit_macro<'a>(outputs: impl IntoIterator<Item = &'a Segment>, reference: &StyleProfile) -> StyleFit {
    let p = segments_profile(outputs);
    if p.is_zero() {
        return StyleFit { score: 0.0, flagged: true };
    }
    StyleFit { score: p.cosine(reference), flagged: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SongStyleFit {
    pub mean: f64,
    pub std: f64,
    /// Songs whose outputs had no note pairs.
    pub flagged: usize,
}

/// Per-song profile similarity, summarized by mean and population std.
pub fn style_fit_song(outputs_by_song: &[Vec<Segment>], reference: &StyleProfile) -> SongStyleFit {
    if outputs_by_song.is_empty() {
        return SongStyleFit { mean: 0.0, std: 0.0, flagged: 0 };
    }
    let fits: Vec<StyleFit> = outputs_by_song.iter().map(|song| style_fit_macro(song, reference)).collect();
    let n = fits.len() as f64;
    let mean = fits.iter().map(|f| f.score).sum::<f64>() / n;
    let var = fits.iter().map(|f| (f.score - mean).powi(2)).sum::<f64>() / n;
    SongStyleFit { mean, std: var.sqrt(), flagged: fits.iter().filter(|f| f.flagged).count() }
}

/// Per-style reference profiles of one track, pooled over the training split.
pub fn reference_profiles(corpus: &PairedCorpus, track: TrackSelector) -> BTreeMap<String, StyleProfile> {
    let mut acc: BTreeMap<String, ProfileAccumulator> = BTreeMap::new();
    for (i, r) in corpus.renderings.iter().enumerate() {
        if corpus.songs[r.song_id].split != Split::Train {
            continue;
        }
        let a = acc.entry(r.style.clone()).or_default();
        for seg in corpus.segments(i, track) {
            a.add(&seg.notes);
        }
    }
    acc.into_iter().map(|(k, v)| (k, v.profile())).collect()
}

/// Random cyclic permutation (Sattolo), so no element keeps its place when
/// n >= 2.
pub fn derangement(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..i);
        perm.swap(i, j);
    }
    perm
}

/// For each style, a permutation of its reference segments: position i is
/// paired with reference `perm[i]`, giving correct style but wrong content.
pub fn randomized_baseline(counts_per_style: &BTreeMap<String, usize>, seed: u64) -> BTreeMap<String, Vec<usize>> {
    counts_per_style
        .iter()
        .map(|(style, &n)| {
            let salt = style.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
            (style.clone(), derangement(n, &mut rng))
        })
        .collect()
}

/// One agglomeration step: clusters `left` and `right` (indices into leaves
/// for `< n`, else `n + step`) joined at `distance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub names: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub merges: Vec<Merge>,
    /// Leaf order of the dendrogram, for display.
    pub leaf_order: Vec<usize>,
}

impl SimilarityMatrix {
    pub fn to_csv(&self, ordered: bool) -> String {
        let order: Vec<usize> = if ordered { self.leaf_order.clone() } else { (0..self.names.len()).collect() };
        let mut out = String::from("style");
        for &i in &order {
            out.push(',');
            out.push_str(&self.names[i]);
        }
        out.push('\n');
        for &i in &order {
            out.push_str(&self.names[i]);
            for &j in &order {
                out.push_str(&format!(",{:.6}", self.matrix[i][j]));
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise profile cosines plus an average-linkage clustering on 1 - cos.
pub fn profile_similarity_matrix(profiles: &BTreeMap<String, StyleProfile>) -> Result<SimilarityMatrix, MetricsError> {
    let names: Vec<String> = profiles.keys().cloned().collect();
    let list: Vec<&StyleProfile> = profiles.values().collect();
    similarity_of(names, &list)
}

pub fn similarity_of(names: Vec<String>, list: &[&StyleProfile]) -> Result<SimilarityMatrix, MetricsError> {
    let n = list.len();
    if n < 2 {
        return Err(MetricsError::TooFewProfiles(2));
    }
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            matrix[i][j] = if i == j { 1.0 } else { list[i].cosine(list[j]) };
        }
    }
    let distance: Vec<Vec<f64>> = matrix.iter().map(|row| row.iter().map(|c| 1.0 - c).collect()).collect();
    let (merges, leaf_order) = average_linkage(&distance);
    Ok(SimilarityMatrix { names, matrix, merges, leaf_order })
}

fn average_linkage(distance: &[Vec<f64>]) -> (Vec<Merge>, Vec<usize>) {
    let n = distance.len();
    // (node id, members)
    let mut active: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut children: Vec<(usize, usize)> = Vec::new();
    let mut merges = Vec::new();
    while active.len() > 1 {
        let mut best = (f64::INFINITY, 0, 1);
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let (ma, mb) = (&active[a].1, &active[b].1);
                let sum: f64 = ma.iter().flat_map(|&i| mb.iter().map(move |&j| distance[i][j])).sum();
                let d = sum / (ma.len() * mb.len()) as f64;
                if d < best.0 - 1e-12 {
                    best = (d, a, b);
                }
            }
        }
        let (d, a, b) = best;
        let (id_b, mem_b) = active.remove(b);
        let (id_a, mut mem_a) = active.remove(a);
        mem_a.extend(mem_b);
        let id = n + children.len();
        children.push((id_a, id_b));
        merges.push(Merge { left: id_a, right: id_b, distance: d, size: mem_a.len() });
        active.insert(a, (id, mem_a));
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![active.first().map_or(0, |a| a.0)];
    while let Some(node) = stack.pop() {
        if node < n {
            order.push(node);
        } else {
            let (l, r) = children[node - n];
            stack.push(r);
            stack.push(l);
        }
    }
    (merges, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::music::{Note, TimeSignature};

    fn seg(notes: &[(u8, f64, f64)]) -> Segment {
        Segment::new(NoteList::new(notes.iter().map(|&(p, a, b)| Note::new(p, a, b)), TimeSignature::FourFour))
    }

    fn unit(k: usize) -> [f64; 12] {
        let mut v = [0.0; 12];
        v[k] = 1.0;
        v
    }

    #[test]
    fn sustained_note_gives_unit_chroma() {
        let c = chroma(&seg(&[(60, 0.0, 32.0)]));
        assert_eq!(c.frames.len(), 31);
        assert!(c.frames.iter().all(|f| *f == unit(0)));
        assert!(chroma(&Segment::empty()).frames.iter().all(|f| f.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn chroma_transition_has_one_mixed_window() {
        let c = chroma(&seg(&[(60, 0.0, 16.0), (67, 16.0, 32.0)]));
        // window w covers beats [w, w + 2)
        for (w, f) in c.frames.iter().enumerate() {
            let expected = match w {
                0..=14 => unit(0),
                15 => {
                    let mut v = [0.0; 12];
                    v[0] = 0.5;
                    v[7] = 0.5;
                    v
                }
                _ => unit(7),
            };
            assert_eq!(*f, expected, "window {w}");
        }
    }

    #[test]
    fn content_preservation_basics() {
        let s = seg(&[(60, 0.0, 32.0), (64, 0.0, 16.0)]);
        assert!((content_preservation(&s, &s).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(content_preservation(&s, &Segment::empty()).unwrap(), 0.0);
        assert_eq!(content_preservation(&Segment::empty(), &Segment::empty()).unwrap(), 1.0);
        let mut short = Segment::empty();
        short.bars = 4;
        assert_eq!(content_preservation(&s, &short), Err(MetricsError::LengthMismatch(32, 16)));
    }

    #[test]
    fn profile_single_pair() {
        let p = style_profile([&NoteList::new([Note::new(60, 0.0, 1.0), Note::new(64, 1.0, 2.0)], TimeSignature::FourFour)]);
        assert_eq!(p.values.len(), 984);
        assert_eq!(p.get(6, 24), 1.0);
        assert_eq!(p.values.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn profile_simultaneous_pair_counts_both_orders() {
        let p = style_profile([&NoteList::new([Note::new(60, 0.0, 1.0), Note::new(64, 0.0, 1.0)], TimeSignature::FourFour)]);
        assert_eq!(p.get(0, 24), 0.5);
        assert_eq!(p.get(0, 16), 0.5);
        assert!(style_profile(std::iter::empty::<&NoteList>()).is_zero());
    }

    #[test]
    fn profile_respects_limits() {
        let far = NoteList::new([Note::new(60, 0.0, 1.0), Note::new(61, 4.0, 5.0), Note::new(90, 0.5, 1.0)], TimeSignature::FourFour);
        // 60->61 is 4 beats apart, 60->90 and 61<-90 exceed 20 semitones.
        assert!(style_profile([&far]).is_zero());
    }

    #[test]
    fn style_fit_variants() {
        let a = seg(&[(40, 0.0, 1.0), (47, 1.0, 2.0), (40, 2.0, 3.0)]);
        let reference = segments_profile([&a]);
        let fit = style_fit_macro([&a], &reference);
        assert!((fit.score - 1.0).abs() < 1e-12 && !fit.flagged);
        let empty = style_fit_macro(std::iter::empty::<&Segment>(), &reference);
        assert_eq!((empty.score, empty.flagged), (0.0, true));
        let one = style_fit_song(&[vec![a.clone()]], &reference);
        assert_eq!(one.std, 0.0);
        let same = style_fit_song(&[vec![a.clone()], vec![a.clone()]], &reference);
        assert!((same.mean - fit.score).abs() < 1e-12);
    }

    #[test]
    fn sattolo_is_a_derangement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..20 {
            let p = derangement(n, &mut rng);
            let mut sorted = p.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            assert!(p.iter().enumerate().all(|(i, &j)| i != j));
        }
        assert_eq!(derangement(1, &mut rng), vec![0]);
    }

    fn toy(values: &[(usize, f64)]) -> StyleProfile {
        let mut p = StyleProfile::zero();
        for &(i, v) in values {
            p.values[i] = v;
        }
        let s: f64 = p.values.iter().sum();
        p.values.iter_mut().for_each(|v| *v /= s);
        p
    }

    #[test]
    fn similarity_matrix_structure() {
        let mut profiles = BTreeMap::new();
        profiles.insert("a1".to_string(), toy(&[(0, 1.0), (1, 0.2)]));
        profiles.insert("b1".to_string(), toy(&[(500, 1.0), (501, 0.3)]));
        profiles.insert("a2".to_string(), toy(&[(0, 1.0), (2, 0.3)]));
        profiles.insert("b2".to_string(), toy(&[(500, 1.0), (502, 0.2)]));
        let m = profile_similarity_matrix(&profiles).unwrap();
        for i in 0..4 {
            assert_eq!(m.matrix[i][i], 1.0);
            for j in 0..4 {
                assert_eq!(m.matrix[i][j], m.matrix[j][i]);
            }
        }
        // Brute force over all 2-vs-2 partitions: the top merge must separate
        // {a1, a2} from {b1, b2}.
        let top = m.merges.last().unwrap();
        let leaves = |node: usize| -> Vec<usize> {
            let mut out = vec![];
            let mut stack = vec![node];
            while let Some(x) = stack.pop() {
                if x < 4 {
                    out.push(x)
                } else {
                    stack.push(m.merges[x - 4].left);
                    stack.push(m.merges[x - 4].right);
                }
            }
            out.sort();
            out
        };
        let groups = [leaves(top.left), leaves(top.right)];
        let names = |g: &Vec<usize>| g.iter().map(|&i| m.names[i].chars().next().unwrap()).collect::<String>();
        assert!(groups.iter().all(|g| g.len() == 2 && (names(g) == "aa" || names(g) == "bb")));
        let first_family = m.names[m.leaf_order[0]].chars().next();
        assert_eq!(m.names[m.leaf_order[1]].chars().next(), first_family);

        let same: BTreeMap<String, StyleProfile> = ["x", "y"].iter().map(|n| (n.to_string(), toy(&[(3, 1.0)]))).collect();
        let m = profile_similarity_matrix(&same).unwrap();
        assert!(m.matrix.iter().flatten().all(|&v| (v - 1.0).abs() < 1e-12));
        let one: BTreeMap<String, StyleProfile> = [("x".to_string(), toy(&[(3, 1.0)]))].into_iter().collect();
        assert!(profile_similarity_matrix(&one).is_err());
    }
}
