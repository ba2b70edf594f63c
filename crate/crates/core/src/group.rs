//! Finitely generated groups of Moebius maps: presets, words, ping-pong
//! certification and breadth-first orbit enumeration.

use num_complex::Complex64 as Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moebius::{apply_boundary, classify, compose, MapKind, MoebiusMap, SpherePoint};

/// Generator index. Generators are stored as `g1..gk, g1^-1..gk^-1`.
pub type Letter = u8;

/// Default cap on the number of orbit-table entries.
pub const DEFAULT_ENTRY_CAP: u64 = 10_000_000;

/// Names accepted by [`load_preset`].
pub const PRESET_NAMES: [&str; 3] = ["gamma2", "schottky2", "kleinian_pp"];

/// Letter bookkeeping for a free group of rank `k` on `2k` symmetric letters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub rank: usize,
}

impl Alphabet {
    pub fn new(rank: usize) -> Self {
        Alphabet { rank }
    }

    pub fn size(&self) -> usize {
        2 * self.rank
    }

    pub fn inverse(&self, l: Letter) -> Letter {
        ((l as usize + self.rank) % self.size()) as Letter
    }

    /// Free reduction.
    pub fn reduce(&self, letters: &[Letter]) -> Word {
        let mut out: Vec<Letter> = Vec::with_capacity(letters.len());
        for &l in letters {
            if out.last() == Some(&self.inverse(l)) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word { letters: out, reduced: true }
    }

    pub fn is_reduced(&self, letters: &[Letter]) -> bool {
        letters.windows(2).all(|p| p[1] != self.inverse(p[0]))
    }

    pub fn invert(&self, w: &Word) -> Word {
        Word { letters: w.letters.iter().rev().map(|&l| self.inverse(l)).collect(), reduced: w.reduced }
    }

    /// Reduced form of `u v`.
    pub fn multiply(&self, u: &Word, v: &Word) -> Word {
        let mut all = u.letters.clone();
        all.extend_from_slice(&v.letters);
        self.reduce(&all)
    }

    /// Number of reduced words of length exactly `len`.
    pub fn sphere_size(&self, len: usize) -> u64 {
        if len == 0 {
            return 1;
        }
        let q = (self.size() - 1) as u64;
        (self.size() as u64).saturating_mul(q.saturating_pow(len as u32 - 1))
    }

    /// Number of reduced words of length at most `len`.
    pub fn ball_size(&self, len: usize) -> u64 {
        (0..=len).fold(0u64, |acc, l| acc.saturating_add(self.sphere_size(l)))
    }
}

/// A word in the generators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Word {
    pub letters: Vec<Letter>,
    pub reduced: bool,
}

impl Word {
    pub fn identity() -> Self {
        Word { letters: Vec::new(), reduced: true }
    }

    /// A word as given, not assumed reduced.
    pub fn new(letters: Vec<Letter>) -> Self {
        Word { letters, reduced: false }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Compact text form, e.g. `0.1.2`; the identity is `e`.
    pub fn label(&self) -> String {
        if self.letters.is_empty() {
            return "e".into();
        }
        self.letters.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(".")
    }
}

/// A closed spherical cap `{eta : angle(eta, center) <= radius}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    pub center: SpherePoint,
    pub radius: f64,
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl Cap {
    pub fn new(center: SpherePoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius < std::f64::consts::PI) {
            return Err(Error::Invalid(format!("cap radius {radius} outside (0, pi)")));
        }
        Ok(Cap { center, radius })
    }

    /// The cap bounded by the circle through three boundary points, on the side of `inside`.
    pub fn through(p: [SpherePoint; 3], inside: SpherePoint) -> Result<Self> {
        let [p1, p2, p3] = p.map(|q| q.coords());
        let d1 = [p2[0] - p1[0], p2[1] - p1[1], p2[2] - p1[2]];
        let d2 = [p3[0] - p1[0], p3[1] - p1[1], p3[2] - p1[2]];
        let n = SpherePoint::from_direction(cross(d1, d2))?;
        let mut nc = n.coords();
        let mut level = nc.iter().zip(p1).map(|(a, b)| a * b).sum::<f64>();
        let side = nc.iter().zip(inside.coords()).map(|(a, b)| a * b).sum::<f64>();
        if side < level {
            nc = nc.map(|v| -v);
            level = -level;
        }
        Cap::new(SpherePoint::from_direction(nc)?, level.clamp(-1.0, 1.0).acos())
    }

    /// Closed disk `|z - c| <= r` of the Riemann sphere chart.
    pub fn complex_disk(c: Complex, r: f64) -> Result<Self> {
        let pts = [c + r, c + Complex::new(0.0, r), c - r].map(SpherePoint::from_complex);
        Cap::through(pts, SpherePoint::from_complex(c))
    }

    /// Closed exterior `|z - c| >= r`, containing infinity.
    pub fn complex_exterior(c: Complex, r: f64) -> Result<Self> {
        let pts = [c + r, c + Complex::new(0.0, r), c - r].map(SpherePoint::from_complex);
        Cap::through(pts, SpherePoint::NORTH)
    }

    /// Closed half-plane `Re(conj(u) z) >= k` for a unit complex `u`.
    pub fn half_plane(u: Complex, k: f64) -> Result<Self> {
        let u = u / u.norm();
        let iu = u * Complex::new(0.0, 1.0);
        let pts = [-1.0, 0.0, 1.0].map(|t| SpherePoint::from_complex(u * k + iu * t));
        Cap::through(pts, SpherePoint::from_complex(u * (k + 1.0)))
    }

    pub fn contains(&self, eta: &SpherePoint, slack: f64) -> bool {
        self.center.angle_to(eta) <= self.radius + slack
    }

    /// `n` equally spaced points on the bounding circle.
    pub fn boundary_grid(&self, n: usize) -> Vec<SpherePoint> {
        let c = self.center.coords();
        let helper = if c[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let u = SpherePoint::from_direction(cross(c, helper)).unwrap().coords();
        let v = cross(c, u);
        let (s, co) = self.radius.sin_cos();
        (0..n)
            .map(|i| {
                let phi = std::f64::consts::TAU * i as f64 / n as f64;
                let (sp, cp) = phi.sin_cos();
                let p = [0, 1, 2].map(|k| co * c[k] + s * (cp * u[k] + sp * v[k]));
                SpherePoint::from_direction(p).unwrap()
            })
            .collect()
    }
}

/// A finitely generated group given by a symmetric generating set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    /// `g1..gk` followed by `g1^-1..gk^-1`.
    pub generators: Vec<MoebiusMap>,
    pub is_free_ping_pong: bool,
    /// One cap per generator, same order: `caps[i]` must absorb the image under `g_i`.
    pub ping_pong_caps: Option<Vec<Cap>>,
    /// 2 for groups preserving the real circle, 3 otherwise.
    pub ambient_dim: u8,
    pub tol: f64,
}

impl GroupSpec {
    /// Builds a spec from the primitive generators, appending the inverses.
    pub fn from_primitive(
        name: &str,
        primitive: Vec<MoebiusMap>,
        caps: Option<Vec<Cap>>,
        ambient_dim: u8,
    ) -> Result<Self> {
        if primitive.is_empty() {
            return Err(Error::Config("a group needs at least one generator".into()));
        }
        if primitive.len() > 64 {
            return Err(Error::Config("at most 64 primitive generators are supported".into()));
        }
        if ambient_dim != 2 && ambient_dim != 3 {
            return Err(Error::Config(format!("ambient dimension must be 2 or 3, got {ambient_dim}")));
        }
        for (i, g) in primitive.iter().enumerate() {
            match classify(g).kind {
                MapKind::Identity => return Err(Error::Config(format!("generator {i} is the identity"))),
                MapKind::Elliptic => return Err(Error::Config(format!("generator {i} is elliptic"))),
                _ => {}
            }
        }
        let mut generators = primitive.clone();
        generators.extend(primitive.iter().map(|g| g.inverse()));
        if let Some(c) = &caps {
            if c.len() != generators.len() {
                return Err(Error::Config(format!("expected {} ping-pong caps, got {}", generators.len(), c.len())));
            }
        }
        let mut spec = GroupSpec {
            name: name.to_string(),
            generators,
            is_free_ping_pong: false,
            ping_pong_caps: caps,
            ambient_dim,
            tol: 1e-9,
        };
        if spec.ping_pong_caps.is_some() {
            let report = ping_pong_check(&spec, 1000)?;
            spec.is_free_ping_pong = report.passed;
        }
        Ok(spec)
    }

    pub fn rank(&self) -> usize {
        self.generators.len() / 2
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::new(self.rank())
    }

    pub fn evaluate(&self, w: &Word) -> MoebiusMap {
        w.letters.iter().fold(MoebiusMap::IDENTITY, |acc, &l| compose(&acc, &self.generators[l as usize]))
    }

    /// Primitive generator indices whose matrices are parabolic.
    pub fn parabolic_generators(&self) -> Vec<Letter> {
        (0..self.rank())
            .filter(|&i| classify(&self.generators[i]).kind == MapKind::Parabolic)
            .map(|i| i as Letter)
            .collect()
    }

    pub(crate) fn require_free(&self, what: &str) -> Result<()> {
        if self.is_free_ping_pong {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("{what} needs a free group certified by ping-pong; '{}' is not", self.name)))
        }
    }

    /// Parses the plain-text group format documented in the README.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut dim: u8 = 3;
        let mut gens = Vec::new();
        let mut caps = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| at("expected `key = value`".into()))?;
            let numbers = || -> Result<Vec<f64>> {
                value
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| at(format!("malformed number '{t}'"))))
                    .collect()
            };
            match key {
                "name" => name = value.to_string(),
                "ambient_dim" => dim = value.parse().map_err(|_| at(format!("malformed dimension '{value}'")))?,
                "generator" => {
                    let v = numbers()?;
                    if v.len() != 8 {
                        return Err(at(format!("generator needs 8 numbers, got {}", v.len())));
                    }
                    let m = MoebiusMap::new(
                        Complex::new(v[0], v[1]),
                        Complex::new(v[2], v[3]),
                        Complex::new(v[4], v[5]),
                        Complex::new(v[6], v[7]),
                    )
                    .map_err(|e| at(e.to_string()))?;
                    gens.push(m);
                }
                "cap" => {
                    let v = numbers()?;
                    if v.len() != 4 {
                        return Err(at(format!("cap needs 4 numbers, got {}", v.len())));
                    }
                    let center = SpherePoint::from_direction([v[0], v[1], v[2]]).map_err(|e| at(e.to_string()))?;
                    caps.push(Cap::new(center, v[3]).map_err(|e| at(e.to_string()))?);
                }
                other => return Err(at(format!("unknown key '{other}'"))),
            }
        }
        let caps = if caps.is_empty() { None } else { Some(caps) };
        GroupSpec::from_primitive(&name, gens, caps, dim)
    }
}

/// Loads one of the shipped presets; every preset is certified by ping-pong at load time.
pub fn load_preset(name: &str) -> Result<GroupSpec> {
    let c = Complex::new;
    let spec = match name {
        "gamma2" => {
            let a = MoebiusMap::real(1.0, 2.0, 0.0, 1.0)?;
            let b = MoebiusMap::real(1.0, 0.0, 2.0, 1.0)?;
            let caps = vec![
                Cap::half_plane(c(1.0, 0.0), 1.0)?,
                Cap::complex_disk(c(0.5, 0.0), 0.5)?,
                Cap::half_plane(c(-1.0, 0.0), 1.0)?,
                Cap::complex_disk(c(-0.5, 0.0), 0.5)?,
            ];
            GroupSpec::from_primitive(name, vec![a, b], Some(caps), 2)?
        }
        "schottky2" => {
            let (ch, sh) = (1f64.cosh(), 1f64.sinh());
            let e = std::f64::consts::E;
            let a = MoebiusMap::real(ch, sh, sh, ch)?;
            let b = MoebiusMap::real(e, 0.0, 0.0, 1.0 / e)?;
            let caps = vec![
                Cap::complex_disk(c(ch / sh, 0.0), 1.0 / sh)?,
                Cap::complex_exterior(c(0.0, 0.0), e)?,
                Cap::complex_disk(c(-ch / sh, 0.0), 1.0 / sh)?,
                Cap::complex_disk(c(0.0, 0.0), 1.0 / e)?,
            ];
            GroupSpec::from_primitive(name, vec![a, b], Some(caps), 2)?
        }
        "kleinian_pp" => {
            let (ch, sh) = (2f64.cosh(), 2f64.sinh());
            let a = MoebiusMap::real(1.0, 2.0, 0.0, 1.0)?;
            let b = MoebiusMap::new(c(ch, 0.0), c(0.0, sh), c(0.0, -sh), c(ch, 0.0))?;
            let caps = vec![
                Cap::half_plane(c(1.0, 0.0), 1.0)?,
                Cap::complex_disk(c(0.0, ch / sh), 1.0 / sh)?,
                Cap::half_plane(c(-1.0, 0.0), 1.0)?,
                Cap::complex_disk(c(0.0, -ch / sh), 1.0 / sh)?,
            ];
            GroupSpec::from_primitive(name, vec![a, b], Some(caps), 3)?
        }
        other => {
            return Err(Error::Config(format!("unknown preset '{other}'; available: {}", PRESET_NAMES.join(", "))))
        }
    };
    if !spec.is_free_ping_pong {
        return Err(Error::Config(format!("preset '{name}' failed its ping-pong certification")));
    }
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PingPongReport {
    pub passed: bool,
    /// Largest amount (radians) by which a sampled image leaves its target cap.
    pub max_violation: f64,
    pub failures: Vec<String>,
}

/// Samples the ping-pong conditions: caps pairwise disjoint, and for each
/// generator `g` the image of the complement of the cap of `g^-1` lands in
/// the cap of `g`.
pub fn ping_pong_check(spec: &GroupSpec, grid_size: usize) -> Result<PingPongReport> {
    let caps = spec
        .ping_pong_caps
        .as_ref()
        .ok_or_else(|| Error::Config(format!("group '{}' has no ping-pong caps", spec.name)))?;
    if grid_size < 1000 {
        return Err(Error::Invalid(format!("grid size {grid_size} below the minimum of 1000")));
    }
    let alphabet = spec.alphabet();
    let mut failures = Vec::new();
    let mut max_violation: f64 = 0.0;
    for i in 0..caps.len() {
        for j in i + 1..caps.len() {
            let gap = caps[i].center.angle_to(&caps[j].center) - caps[i].radius - caps[j].radius;
            if gap < -spec.tol {
                max_violation = max_violation.max(-gap);
                failures.push(format!("caps {i} and {j} overlap by {:.3e} rad", -gap));
            }
        }
    }
    for (i, g) in spec.generators.iter().enumerate() {
        let source = &caps[alphabet.inverse(i as Letter) as usize];
        let target = &caps[i];
        let mut worst: f64 = 0.0;
        for p in source.boundary_grid(grid_size) {
            let img = apply_boundary(g, &p);
            worst = worst.max(target.center.angle_to(&img) - target.radius);
        }
        if worst > spec.tol {
            failures.push(format!("generator {i}: image of the boundary leaves its cap by {worst:.3e} rad"));
        }
        max_violation = max_violation.max(worst);
        // the image region is the side inside the target iff g^-1 sends the
        // point opposite the target's center into the source cap
        let opposite = SpherePoint::from_direction(target.center.coords().map(|v| -v))?;
        let back = apply_boundary(&g.inverse(), &opposite);
        if !source.contains(&back, spec.tol) {
            failures.push(format!("generator {i}: complement maps onto the wrong side of its cap"));
        }
    }
    Ok(PingPongReport { passed: failures.is_empty(), max_violation, failures })
}

/// Word length `|w|_S`, the reduced length in a free group.
pub fn word_length(spec: &GroupSpec, w: &Word) -> Result<usize> {
    spec.require_free("word length")?;
    if w.letters.iter().any(|&l| l as usize >= spec.generators.len()) {
        return Err(Error::Invalid(format!("word {} uses an unknown generator", w.label())));
    }
    Ok(spec.alphabet().reduce(&w.letters).len())
}

/// Breadth-first indexing of the reduced words of length at most `max_len`,
/// in the same order as [`OrbitTable`].
#[derive(Debug, Clone)]
pub struct WordBall {
    alphabet: Alphabet,
    max_len: usize,
    layer_start: Vec<usize>,
    parent: Vec<u32>,
    last: Vec<Letter>,
}

impl WordBall {
    pub fn new(alphabet: Alphabet, max_len: usize, cap: u64) -> Result<Self> {
        let predicted = alphabet.ball_size(max_len);
        if predicted > cap || predicted > u32::MAX as u64 {
            return Err(Error::MemoryGuard { predicted, cap });
        }
        let mut layer_start = vec![0usize; max_len + 2];
        for l in 0..=max_len {
            layer_start[l + 1] = layer_start[l] + alphabet.sphere_size(l) as usize;
        }
        let n = predicted as usize;
        let mut ball = WordBall { alphabet, max_len, layer_start, parent: vec![0; n], last: vec![0; n] };
        for i in 0..ball.layer_start[max_len] {
            for l in 0..alphabet.size() as Letter {
                if let Some(j) = ball.child(i, l) {
                    ball.parent[j] = i as u32;
                    ball.last[j] = l;
                }
            }
        }
        Ok(ball)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Length of the word at index `i`.
    pub fn word_len(&self, i: usize) -> usize {
        self.layer_start.partition_point(|&s| s <= i) - 1
    }

    /// Index of `w l` when it is reduced and still inside the ball.
    pub fn child(&self, i: usize, l: Letter) -> Option<usize> {
        let len = self.word_len(i);
        if len >= self.max_len {
            return None;
        }
        let rank = i - self.layer_start[len];
        let child_rank = if len == 0 {
            l as usize
        } else {
            let forbidden = self.alphabet.inverse(self.last[i]);
            if l == forbidden {
                return None;
            }
            rank * (self.alphabet.size() - 1) + if l < forbidden { l as usize } else { l as usize - 1 }
        };
        Some(self.layer_start[len + 1] + child_rank)
    }

    /// Index of the word with its last letter removed.
    pub fn parent(&self, i: usize) -> usize {
        self.parent[i] as usize
    }

    pub fn last_letter(&self, i: usize) -> Option<Letter> {
        (i != 0).then(|| self.last[i])
    }

    /// Index of `w l` after free reduction, if inside the ball.
    pub fn step(&self, i: usize, l: Letter) -> Option<usize> {
        match self.last_letter(i) {
            Some(last) if l == self.alphabet.inverse(last) => Some(self.parent(i)),
            _ => self.child(i, l),
        }
    }

    pub fn index_of(&self, w: &Word) -> Option<usize> {
        let reduced = self.alphabet.reduce(&w.letters);
        reduced.letters.iter().try_fold(0usize, |i, &l| self.child(i, l))
    }

    pub fn word(&self, i: usize) -> Word {
        let mut letters = Vec::new();
        let mut j = i;
        while j != 0 {
            letters.push(self.last[j]);
            j = self.parent[j] as usize;
        }
        letters.reverse();
        Word { letters, reduced: true }
    }
}

/// One group element of an [`OrbitTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitEntry {
    pub word: Word,
    pub map: MoebiusMap,
    pub hyp_radius: f64,
}

/// All reduced words up to a maximal length, in breadth-first order
/// (by length, then lexicographically by generator index).
///
/// Entries are stored compactly as (parent, last letter, radius); words and
/// matrices are rebuilt on demand.
#[derive(Debug, Clone)]
pub struct OrbitTable {
    generators: Vec<MoebiusMap>,
    alphabet: Alphabet,
    parent: Vec<u32>,
    last: Vec<Letter>,
    radius: Vec<f64>,
    sorted_radii: Vec<f64>,
    max_word_length: usize,
    min_radius_next_layer: f64,
    min_generator_power_radius: f64,
}

impl OrbitTable {
    pub fn len(&self) -> usize {
        self.radius.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radius.is_empty()
    }

    pub fn max_word_length(&self) -> usize {
        self.max_word_length
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn generators(&self) -> &[MoebiusMap] {
        &self.generators
    }

    /// `d(o, h o)` for every entry, in table order.
    pub fn radii(&self) -> &[f64] {
        &self.radius
    }

    /// The same radii in ascending order.
    pub fn sorted_radii(&self) -> &[f64] {
        &self.sorted_radii
    }

    pub fn word(&self, i: usize) -> Word {
        let mut letters = Vec::new();
        let mut j = i;
        while j != 0 {
            letters.push(self.last[j]);
            j = self.parent[j] as usize;
        }
        letters.reverse();
        Word { letters, reduced: true }
    }

    pub fn word_len(&self, i: usize) -> usize {
        let mut n = 0;
        let mut j = i;
        while j != 0 {
            n += 1;
            j = self.parent[j] as usize;
        }
        n
    }

    pub fn map(&self, i: usize) -> MoebiusMap {
        self.word(i).letters.iter().fold(MoebiusMap::IDENTITY, |acc, &l| compose(&acc, &self.generators[l as usize]))
    }

    pub fn entry(&self, i: usize) -> OrbitEntry {
        let word = self.word(i);
        let map = self.map(i);
        OrbitEntry { word, map, hyp_radius: self.radius[i] }
    }

    /// Largest radius up to which the table is known to contain every group element.
    ///
    /// The skirt is the smaller of `d(o, g^L o)` for the generator `g` of least
    /// displacement and the least radius among words of length `L + 1`.
    pub fn reliable_radius(&self) -> f64 {
        self.min_generator_power_radius.min(self.min_radius_next_layer)
    }

    /// Calls `f(index, map, radius)` for every entry, rebuilding matrices
    /// incrementally along the word tree.
    pub fn for_each_map<F: FnMut(usize, &MoebiusMap, f64)>(&self, mut f: F) {
        f(0, &MoebiusMap::IDENTITY, 0.0);
        let mut first_child = vec![0usize; self.len()];
        // children of an entry are contiguous in the next layer, so one pass
        // over parents recovers each entry's first child
        for i in (1..self.len()).rev() {
            first_child[self.parent[i] as usize] = i;
        }
        let mut stack: Vec<(usize, MoebiusMap)> = vec![(0, MoebiusMap::IDENTITY)];
        while let Some((i, m)) = stack.pop() {
            let start = first_child[i];
            if start == 0 {
                continue;
            }
            let mut j = start;
            while j < self.len() && self.parent[j] as usize == i {
                let child = compose(&m, &self.generators[self.last[j] as usize]);
                f(j, &child, self.radius[j]);
                stack.push((j, child));
                j += 1;
            }
        }
    }

    /// Checks that distinct entries are distinct group elements (up to `tol`).
    pub fn distinct_elements(&self, tol: f64) -> bool {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| self.radius[i].total_cmp(&self.radius[j]));
        let maps: Vec<MoebiusMap> = (0..self.len()).map(|i| self.map(i)).collect();
        for (pos, &i) in order.iter().enumerate() {
            for &j in &order[pos + 1..] {
                if self.radius[j] - self.radius[i] > 1e-7 * (1.0 + self.radius[i]) {
                    break;
                }
                if maps[i].approx_eq(&maps[j], tol) {
                    return false;
                }
            }
        }
        true
    }
}

/// Breadth-first orbit enumeration with the default entry cap.
pub fn enumerate_orbit(spec: &GroupSpec, max_len: usize) -> Result<OrbitTable> {
    enumerate_orbit_capped(spec, max_len, DEFAULT_ENTRY_CAP)
}

struct Dfs<'a> {
    gens: &'a [MoebiusMap],
    alphabet: Alphabet,
    max_len: usize,
    layer_start: Vec<usize>,
    parent: Vec<u32>,
    last: Vec<Letter>,
    radius: Vec<f64>,
    min_next: f64,
}

impl Dfs<'_> {
    fn visit(&mut self, m: &MoebiusMap, index: usize, rank: usize, len: usize, prev: Option<Letter>) {
        let q = self.alphabet.size() - 1;
        for l in 0..self.alphabet.size() as Letter {
            if prev == Some(self.alphabet.inverse(l)) {
                continue;
            }
            let child = compose(m, &self.gens[l as usize]);
            if len == self.max_len {
                self.min_next = self.min_next.min(child.displacement());
                continue;
            }
            let child_rank = match prev {
                None => l as usize,
                Some(p) => {
                    let forbidden = self.alphabet.inverse(p);
                    rank * q + if l < forbidden { l as usize } else { l as usize - 1 }
                }
            };
            let idx = self.layer_start[len + 1] + child_rank;
            self.parent[idx] = index as u32;
            self.last[idx] = l;
            self.radius[idx] = child.displacement();
            self.visit(&child, idx, child_rank, len + 1, Some(l));
        }
    }
}

/// Breadth-first orbit enumeration refusing tables larger than `cap` entries.
pub fn enumerate_orbit_capped(spec: &GroupSpec, max_len: usize, cap: u64) -> Result<OrbitTable> {
    spec.require_free("orbit enumeration")?;
    if max_len < 1 {
        return Err(Error::Invalid("orbit enumeration needs max_len >= 1".into()));
    }
    let alphabet = spec.alphabet();
    let predicted = alphabet.ball_size(max_len);
    if predicted > cap || predicted > u32::MAX as u64 {
        return Err(Error::MemoryGuard { predicted, cap });
    }
    let n = predicted as usize;
    let mut layer_start = vec![0usize; max_len + 2];
    for l in 0..=max_len {
        layer_start[l + 1] = layer_start[l] + alphabet.sphere_size(l) as usize;
    }
    let mut dfs = Dfs {
        gens: &spec.generators,
        alphabet,
        max_len,
        layer_start,
        parent: vec![0; n],
        last: vec![0; n],
        radius: vec![0.0; n],
        min_next: f64::INFINITY,
    };
    dfs.visit(&MoebiusMap::IDENTITY, 0, 0, 0, None);
    let Dfs { parent, last, radius, min_next, .. } = dfs;

    let g_min = spec
        .generators
        .iter()
        .min_by(|a, b| a.displacement().total_cmp(&b.displacement()))
        .expect("nonempty generating set");
    let power_radius = g_min.pow(max_len as i64).displacement();
    let mut sorted_radii = radius.clone();
    sorted_radii.sort_by(f64::total_cmp);
    Ok(OrbitTable {
        generators: spec.generators.clone(),
        alphabet,
        parent,
        last,
        radius,
        sorted_radii,
        max_word_length: max_len,
        min_radius_next_layer: min_next,
        min_generator_power_radius: power_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moebius::{classify, MapKind};

    #[test]
    fn presets_load_and_classify() {
        let g = load_preset("gamma2").unwrap();
        assert_eq!(g.generators.len(), 4);
        assert!(g.generators.iter().all(|m| classify(m).kind == MapKind::Parabolic));
        let s = load_preset("schottky2").unwrap();
        assert_eq!(s.generators.len(), 4);
        assert!(s.generators.iter().all(|m| classify(m).kind == MapKind::Loxodromic));
        let k = load_preset("kleinian_pp").unwrap();
        assert_eq!(k.parabolic_generators(), vec![0]);
        assert_eq!(classify(&k.generators[1]).kind, MapKind::Loxodromic);
        assert!(matches!(load_preset("modular"), Err(Error::Config(msg)) if msg.contains("gamma2")));
    }

    #[test]
    fn shipped_caps_pass_ping_pong() {
        for name in PRESET_NAMES {
            let spec = load_preset(name).unwrap();
            let report = ping_pong_check(&spec, 2000).unwrap();
            assert!(report.passed, "{name}: {:?}", report.failures);
        }
    }

    #[test]
    fn shrunk_caps_fail_ping_pong() {
        for name in PRESET_NAMES {
            let mut spec = load_preset(name).unwrap();
            for cap in spec.ping_pong_caps.as_mut().unwrap() {
                cap.radius *= 0.5;
            }
            assert!(!ping_pong_check(&spec, 1000).unwrap().passed, "{name}");
        }
    }

    #[test]
    fn ping_pong_needs_caps_and_grid() {
        let mut spec = load_preset("gamma2").unwrap();
        assert!(matches!(ping_pong_check(&spec, 10), Err(Error::Invalid(_))));
        spec.ping_pong_caps = None;
        assert!(matches!(ping_pong_check(&spec, 1000), Err(Error::Config(_))));
    }

    #[test]
    fn collinear_fixed_points_fail_certification() {
        // a loxodromic with axis endpoints +-1 next to z -> z + 2 generates a
        // group in which B and aBa^-1 share exactly one fixed point
        let (ch, sh) = (2f64.cosh(), 2f64.sinh());
        let a = MoebiusMap::real(1.0, 2.0, 0.0, 1.0).unwrap();
        let b = MoebiusMap::real(ch, sh, sh, ch).unwrap();
        let caps = vec![
            Cap::half_plane(Complex::new(1.0, 0.0), 1.0).unwrap(),
            Cap::complex_disk(Complex::new(ch / sh, 0.0), 1.0 / sh).unwrap(),
            Cap::half_plane(Complex::new(-1.0, 0.0), 1.0).unwrap(),
            Cap::complex_disk(Complex::new(-ch / sh, 0.0), 1.0 / sh).unwrap(),
        ];
        let spec = GroupSpec::from_primitive("collinear", vec![a, b], Some(caps), 2).unwrap();
        assert!(!spec.is_free_ping_pong);
    }

    #[test]
    fn cap_constructors() {
        let hp = Cap::half_plane(Complex::new(1.0, 0.0), 1.0).unwrap();
        assert!((hp.radius - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let c = hp.center.coords();
        assert!((c[0] - 0.5f64.sqrt()).abs() < 1e-12 && (c[2] - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(hp.contains(&SpherePoint::from_complex(Complex::new(2.0, 5.0)), 0.0));
        assert!(!hp.contains(&SpherePoint::from_complex(Complex::new(0.5, 0.0)), 0.0));
        let ext = Cap::complex_exterior(Complex::new(0.0, 0.0), 3.0).unwrap();
        assert!(ext.contains(&SpherePoint::NORTH, 0.0));
        assert!(!ext.contains(&SpherePoint::from_complex(Complex::new(1.0, 1.0)), 0.0));
    }

    #[test]
    fn word_length_examples() {
        let spec = load_preset("schottky2").unwrap();
        assert_eq!(word_length(&spec, &Word::identity()).unwrap(), 0);
        assert_eq!(word_length(&spec, &Word::new(vec![0, 2, 1])).unwrap(), 1);
        assert_eq!(word_length(&spec, &Word::new(vec![0, 1, 2, 3])).unwrap(), 4);
        let mut nonfree = spec.clone();
        nonfree.is_free_ping_pong = false;
        assert!(matches!(word_length(&nonfree, &Word::identity()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn enumeration_counts() {
        let spec = load_preset("gamma2").unwrap();
        assert_eq!(enumerate_orbit(&spec, 1).unwrap().len(), 5);
        let t = enumerate_orbit(&spec, 3).unwrap();
        assert_eq!(t.len(), 1 + 4 + 12 + 36);
        assert_eq!(t.word(0), Word::identity());
        for i in 0..t.len() {
            let e = t.entry(i);
            assert!(spec.alphabet().is_reduced(&e.word.letters));
            assert!((e.map.displacement() - e.hyp_radius).abs() < 1e-12);
        }
        // table is breadth-first and lexicographic inside each layer
        let words: Vec<Word> = (0..t.len()).map(|i| t.word(i)).collect();
        for p in words.windows(2) {
            assert!((p[0].len(), &p[0].letters) < (p[1].len(), &p[1].letters));
        }
    }

    #[test]
    fn gamma2_square_of_parabolic() {
        let spec = load_preset("gamma2").unwrap();
        let t = enumerate_orbit(&spec, 2).unwrap();
        let target = MoebiusMap::real(1.0, 4.0, 0.0, 1.0).unwrap();
        let hits: Vec<usize> = (0..t.len()).filter(|&i| t.map(i).approx_eq(&target, 1e-12)).collect();
        assert_eq!(hits.len(), 1);
        assert_eq!(t.word_len(hits[0]), 2);
        assert!((t.radii()[hits[0]] - 2.0 * 2f64.asinh()).abs() < 1e-12);
    }

    #[test]
    fn visitor_matches_parent_chain() {
        let spec = load_preset("kleinian_pp").unwrap();
        let t = enumerate_orbit(&spec, 4).unwrap();
        let mut seen = vec![false; t.len()];
        t.for_each_map(|i, m, r| {
            assert!(!seen[i]);
            seen[i] = true;
            assert!(m.approx_eq(&t.map(i), 1e-9));
            assert_eq!(r, t.radii()[i]);
        });
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn word_ball_matches_orbit_order() {
        let spec = load_preset("gamma2").unwrap();
        let t = enumerate_orbit(&spec, 4).unwrap();
        let ball = WordBall::new(spec.alphabet(), 4, DEFAULT_ENTRY_CAP).unwrap();
        assert_eq!(ball.len(), t.len());
        for i in 0..t.len() {
            let w = t.word(i);
            assert_eq!(ball.word(i), w);
            assert_eq!(ball.index_of(&w), Some(i));
            assert_eq!(ball.word_len(i), w.len());
            for l in 0..4 {
                let next = spec.alphabet().multiply(&w, &Word::new(vec![l]));
                assert_eq!(ball.step(i, l), ball.index_of(&next));
            }
        }
    }

    #[test]
    fn memory_guard() {
        let spec = load_preset("gamma2").unwrap();
        let err = enumerate_orbit_capped(&spec, 5, 100).unwrap_err();
        assert_eq!(err, Error::MemoryGuard { predicted: 485, cap: 100 });
        assert!(matches!(enumerate_orbit(&spec, 30), Err(Error::MemoryGuard { .. })));
    }

    #[test]
    fn enumerated_elements_are_distinct() {
        for name in PRESET_NAMES {
            let spec = load_preset(name).unwrap();
            let t = enumerate_orbit(&spec, 5).unwrap();
            assert!(t.distinct_elements(1e-9), "{name}");
        }
    }

    #[test]
    fn reliable_radius_has_no_missing_elements() {
        let spec = load_preset("gamma2").unwrap();
        let shallow = enumerate_orbit(&spec, 5).unwrap();
        let deep = enumerate_orbit(&spec, 8).unwrap();
        let r = shallow.reliable_radius();
        assert!((r - 2.0 * 5f64.asinh()).abs() < 1e-9);
        let count = |t: &OrbitTable| t.radii().iter().filter(|&&x| x <= r).count();
        assert_eq!(count(&shallow), count(&deep));
    }

    #[test]
    fn text_format_round_trip() {
        let text = "name = lox\nambient_dim = 2\n# diag(e, 1/e)\ngenerator = 2.718281828459045 0 0 0 0 0 0.36787944117144233 0\n";
        let spec = GroupSpec::from_text(text).unwrap();
        assert_eq!(spec.name, "lox");
        assert_eq!(spec.generators.len(), 2);
        assert!(!spec.is_free_ping_pong);
        let err = GroupSpec::from_text("generator = 1 0 2\n").unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.contains("line 1")));
        assert!(GroupSpec::from_text("colour = red").is_err());
    }
}
