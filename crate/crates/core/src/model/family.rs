//! Built-in support restrictions.
//!
//! Each family knows its own input/response layout, generates its latent
//! types structurally (from the primitive potential responses, not by
//! filtering pairs), and where the pairwise incompatibility criterion holds
//! also exposes the pairwise predicate used to build graphs directly.

use crate::error::{Error, Result};
use serde_json::{Map, Value};

/// Registered family identifiers.
pub const FAMILY_IDS: &[&str] = &[
    "iv-exclusion",
    "iv-exclusion-monotonicity",
    "ia-monotonicity",
    "partial-monotonicity",
    "mediation-full",
    "exposure-map",
    "exposure-semimonotone",
    "spillover",
    "cessation-length-equal",
    "cessation-length-monotone",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mediators {
    /// Y depends on both mediators.
    Both,
    /// Y depends on the first mediator only.
    First,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpilloverSign {
    None,
    NonPositive,
}

/// A parameterized built-in restriction.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// Y(d,z) = Y(d); responses (y,d) at each z.
    IvExclusion {
        y: Vec<String>,
        d: Vec<String>,
        z: Vec<String>,
    },
    /// Exclusion plus D(z) nondecreasing along the input order.
    IvExclusionMonotonicity {
        y: Vec<String>,
        d: Vec<String>,
        z: Vec<String>,
    },
    /// Selection D(z_1) <= ... <= D(z_K) along the input order.
    IaMonotonicity { d: Vec<String>, z: Vec<String> },
    /// Binary D monotone in each coordinate of Z in {0,1}^m.
    PartialMonotonicity { m: usize },
    /// Binary treatment D, binary mediators (M1,M2), binary Y with Y(m,d) = Y(m).
    MediationFull { mediators: Mediators },
    /// Two-person exposure map, optionally with semimonotonicity.
    Exposure {
        semimonotone: bool,
        assignments: Vec<(Arm, Arm)>,
    },
    /// Exposure-based outcome of one person at exposure levels 0 and 1.
    Spillover { sign: SpilloverSign },
    /// Outcome histories in {0,1}^T at C, SIP, SIA with restrictions on the
    /// length of the initial zero spell.
    CessationLength { waves: usize, monotone: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arm {
    C,
    Sip,
    Sia,
}

impl Arm {
    fn parse(s: &str) -> Option<Arm> {
        match s.trim() {
            "C" => Some(Arm::C),
            "SIP" => Some(Arm::Sip),
            "SIA" => Some(Arm::Sia),
            _ => None,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Arm::C => "C",
            Arm::Sip => "SIP",
            Arm::Sia => "SIA",
        }
    }
}

/// Exposure level of the person whose own arm is `own`.
fn exposure(own: Arm, other: Arm) -> usize {
    match (own, other) {
        (Arm::Sia, _) => 3,
        (Arm::Sip, _) => 2,
        (Arm::C, Arm::C) => 0,
        (Arm::C, _) => 1,
    }
}

fn tuple_label(parts: &[&str]) -> String {
    format!("({})", parts.join(","))
}

fn bits_label(bits: &[usize]) -> String {
    let s: Vec<String> = bits.iter().map(|b| b.to_string()).collect();
    tuple_label(&s.iter().map(String::as_str).collect::<Vec<_>>())
}

/// Accepts either a count (labels "0".."n-1", or `offset`-based) or an explicit label list.
fn labels_param(params: &Map<String, Value>, key: &str, default: usize, offset: usize) -> Result<Vec<String>> {
    match params.get(key) {
        None => Ok((0..default).map(|i| (i + offset).to_string()).collect()),
        Some(Value::Number(n)) => {
            let n = n
                .as_u64()
                .ok_or_else(|| Error::InvalidSpec(format!("`{key}` must be a positive integer")))?
                as usize;
            Ok((0..n).map(|i| (i + offset).to_string()).collect())
        }
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| Error::InvalidSpec(format!("`{key}` labels must be strings")))
            })
            .collect(),
        Some(_) => Err(Error::InvalidSpec(format!("`{key}` must be a count or a label list"))),
    }
}

fn usize_param(params: &Map<String, Value>, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|x| x as usize)
            .ok_or_else(|| Error::InvalidSpec(format!("`{key}` must be a nonnegative integer"))),
    }
}

fn str_param<'a>(params: &'a Map<String, Value>, key: &str, default: &'a str) -> Result<&'a str> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_str()
            .ok_or_else(|| Error::InvalidSpec(format!("`{key}` must be a string"))),
    }
}

/// Odometer over a mixed-radix space; returns false once exhausted.
fn advance(digits: &mut [usize], radix: &[usize]) -> bool {
    for (d, &r) in digits.iter_mut().zip(radix).rev() {
        *d += 1;
        if *d < r {
            return true;
        }
        *d = 0;
    }
    false
}

fn for_each_tuple(radix: &[usize], mut f: impl FnMut(&[usize])) {
    if radix.contains(&0) {
        return;
    }
    let mut digits = vec![0; radix.len()];
    loop {
        f(&digits);
        if !advance(&mut digits, radix) {
            break;
        }
    }
}

/// Length of the initial run of zeros in a history.
fn spell_length(bits: usize, waves: usize) -> usize {
    (0..waves)
        .take_while(|&t| (bits >> (waves - 1 - t)) & 1 == 0)
        .count()
}

impl Family {
    pub fn from_id(id: &str, params: &Map<String, Value>) -> Result<Family> {
        let fam = match id {
            "iv-exclusion" | "iv-exclusion-monotonicity" => {
                let y = labels_param(params, "y", 2, 0)?;
                let d = labels_param(params, "d", 2, 0)?;
                let z = labels_param(params, "z", 2, 0)?;
                if id == "iv-exclusion" {
                    Family::IvExclusion { y, d, z }
                } else {
                    Family::IvExclusionMonotonicity { y, d, z }
                }
            }
            "ia-monotonicity" => Family::IaMonotonicity {
                d: labels_param(params, "d", 2, 0)?,
                z: labels_param(params, "z", 2, 0)?,
            },
            "partial-monotonicity" => Family::PartialMonotonicity {
                m: usize_param(params, "instruments", 2)?,
            },
            "mediation-full" => Family::MediationFull {
                mediators: match str_param(params, "mediators", "both")? {
                    "both" => Mediators::Both,
                    "first" => Mediators::First,
                    other => return Err(Error::InvalidSpec(format!("unknown mediators `{other}`"))),
                },
            },
            "exposure-map" | "exposure-semimonotone" => {
                let assignments = match params.get("assignments") {
                    None => vec![(Arm::C, Arm::C), (Arm::Sip, Arm::C), (Arm::Sia, Arm::C)],
                    Some(Value::Array(a)) => a
                        .iter()
                        .map(|v| {
                            let s = v.as_str().unwrap_or("");
                            let inner = s.trim_start_matches('(').trim_end_matches(')');
                            let mut it = inner.split(',');
                            match (it.next().and_then(Arm::parse), it.next().and_then(Arm::parse), it.next()) {
                                (Some(a), Some(b), None) => Ok((a, b)),
                                _ => Err(Error::InvalidSpec(format!("bad assignment `{s}`"))),
                            }
                        })
                        .collect::<Result<Vec<_>>>()?,
                    Some(_) => return Err(Error::InvalidSpec("`assignments` must be a list".into())),
                };
                Family::Exposure {
                    semimonotone: id == "exposure-semimonotone",
                    assignments,
                }
            }
            "spillover" => Family::Spillover {
                sign: match str_param(params, "sign", "none")? {
                    "none" => SpilloverSign::None,
                    "nonpositive" => SpilloverSign::NonPositive,
                    other => return Err(Error::InvalidSpec(format!("unknown spillover sign `{other}`"))),
                },
            },
            "cessation-length-equal" | "cessation-length-monotone" => Family::CessationLength {
                waves: usize_param(params, "waves", 5)?,
                monotone: id == "cessation-length-monotone",
            },
            other => return Err(Error::UnknownFamily(other.to_owned())),
        };
        fam.validate()?;
        Ok(fam)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_owned()));
        match self {
            Family::IvExclusion { y, d, z } | Family::IvExclusionMonotonicity { y, d, z } => {
                if y.is_empty() || d.is_empty() || z.len() < 2 {
                    return bad("exclusion models need |Y|,|D| >= 1 and |Z| >= 2");
                }
            }
            Family::IaMonotonicity { d, z } => {
                if d.is_empty() || z.len() < 2 {
                    return bad("monotone selection needs |D| >= 1 and |Z| >= 2");
                }
            }
            Family::PartialMonotonicity { m } => {
                if *m == 0 || *m > 4 {
                    return bad("partial monotonicity supports 1 to 4 binary instruments");
                }
            }
            Family::Exposure { assignments, .. } => {
                if assignments.len() < 2 {
                    return bad("exposure models need at least two assignments");
                }
            }
            Family::CessationLength { waves, .. } => {
                if *waves == 0 || *waves > 10 {
                    return bad("cessation models support 1 to 10 waves");
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn id(&self) -> &'static str {
        match self {
            Family::IvExclusion { .. } => "iv-exclusion",
            Family::IvExclusionMonotonicity { .. } => "iv-exclusion-monotonicity",
            Family::IaMonotonicity { .. } => "ia-monotonicity",
            Family::PartialMonotonicity { .. } => "partial-monotonicity",
            Family::MediationFull { .. } => "mediation-full",
            Family::Exposure { semimonotone: false, .. } => "exposure-map",
            Family::Exposure { semimonotone: true, .. } => "exposure-semimonotone",
            Family::Spillover { .. } => "spillover",
            Family::CessationLength { monotone: false, .. } => "cessation-length-equal",
            Family::CessationLength { monotone: true, .. } => "cessation-length-monotone",
        }
    }

    /// Input labels and per-input response labels.
    pub fn layout(&self) -> (Vec<String>, Vec<Vec<String>>) {
        match self {
            Family::IvExclusion { y, d, z } | Family::IvExclusionMonotonicity { y, d, z } => {
                let resp: Vec<String> = y
                    .iter()
                    .flat_map(|yy| d.iter().map(move |dd| tuple_label(&[yy, dd])))
                    .collect();
                (z.clone(), vec![resp; z.len()])
            }
            Family::IaMonotonicity { d, z } => (z.clone(), vec![d.clone(); z.len()]),
            Family::PartialMonotonicity { m } => {
                let inputs = (0..1usize << m)
                    .map(|c| bits_label(&(0..*m).map(|j| (c >> (m - 1 - j)) & 1).collect::<Vec<_>>()))
                    .collect::<Vec<_>>();
                let resp = vec!["0".to_owned(), "1".to_owned()];
                let k = inputs.len();
                (inputs, vec![resp; k])
            }
            Family::MediationFull { .. } => {
                let resp: Vec<String> = (0..8)
                    .map(|c| bits_label(&[(c >> 2) & 1, (c >> 1) & 1, c & 1]))
                    .collect();
                (vec!["0".into(), "1".into()], vec![resp; 2])
            }
            Family::Exposure { assignments, .. } => {
                let inputs = assignments
                    .iter()
                    .map(|(a, b)| tuple_label(&[a.label(), b.label()]))
                    .collect::<Vec<_>>();
                let resp: Vec<String> = (0..4).map(|c| bits_label(&[(c >> 1) & 1, c & 1])).collect();
                let k = inputs.len();
                (inputs, vec![resp; k])
            }
            Family::Spillover { .. } => {
                let resp = vec!["0".to_owned(), "1".to_owned()];
                (vec!["0".into(), "1".into()], vec![resp; 2])
            }
            Family::CessationLength { waves, .. } => {
                let resp: Vec<String> = (0..1usize << waves)
                    .map(|b| format!("{:0width$b}", b, width = waves))
                    .collect();
                let inputs = vec!["C".to_owned(), "SIP".to_owned(), "SIA".to_owned()];
                (inputs, vec![resp; 3])
            }
        }
    }

    /// Structural generation of latent types as response-index maps, possibly
    /// with repeats (the caller deduplicates). `emit` returns false to stop.
    pub fn generate(&self, emit: &mut dyn FnMut(&[usize]) -> bool) {
        match self {
            Family::IvExclusion { y, d, z } | Family::IvExclusionMonotonicity { y, d, z } => {
                let mono = matches!(self, Family::IvExclusionMonotonicity { .. });
                let (ny, nd, nz) = (y.len(), d.len(), z.len());
                let mut stop = false;
                // Y(d) for each d, then D(z) for each z.
                for_each_tuple(&vec![ny; nd], |yd| {
                    if stop {
                        return;
                    }
                    for_each_tuple(&vec![nd; nz], |dz| {
                        if stop || (mono && dz.windows(2).any(|w| w[0] > w[1])) {
                            return;
                        }
                        let t: Vec<usize> = dz.iter().map(|&dd| yd[dd] * nd + dd).collect();
                        stop = !emit(&t);
                    });
                });
            }
            Family::IaMonotonicity { d, z } => {
                let mut stop = false;
                for_each_tuple(&vec![d.len(); z.len()], |dz| {
                    if !stop && dz.windows(2).all(|w| w[0] <= w[1]) {
                        stop = !emit(dz);
                    }
                });
            }
            Family::PartialMonotonicity { m } => {
                let k = 1usize << m;
                let mut stop = false;
                for_each_tuple(&vec![2; k], |f| {
                    if stop {
                        return;
                    }
                    // z <= z' coordinatewise iff z & !z' == 0 as bit masks.
                    let monotone = (0..k).all(|a| (0..k).all(|b| a & !b != 0 || f[a] <= f[b]));
                    if monotone {
                        stop = !emit(f);
                    }
                });
            }
            Family::MediationFull { mediators } => {
                // M(0), M(1) in {0,1}^2 and Y as a function of the mediators.
                let y_args = match mediators {
                    Mediators::Both => 4,
                    Mediators::First => 2,
                };
                let mut stop = false;
                for_each_tuple(&vec![2; y_args], |yfun| {
                    if stop {
                        return;
                    }
                    for_each_tuple(&[4, 4], |md| {
                        if stop {
                            return;
                        }
                        let t: Vec<usize> = md
                            .iter()
                            .map(|&m| {
                                let arg = match mediators {
                                    Mediators::Both => m,
                                    Mediators::First => m >> 1,
                                };
                                yfun[arg] * 4 + m
                            })
                            .collect();
                        stop = !emit(&t);
                    });
                });
            }
            Family::Exposure {
                semimonotone,
                assignments,
            } => {
                // Each person's outcome is a function of their exposure level 0..3.
                let mut stop = false;
                for_each_tuple(&[2; 8], |g| {
                    if stop {
                        return;
                    }
                    let (g1, g2) = (&g[0..4], &g[4..8]);
                    if *semimonotone && (g1.windows(2).any(|w| w[0] < w[1]) || g2.windows(2).any(|w| w[0] < w[1])) {
                        return;
                    }
                    let t: Vec<usize> = assignments
                        .iter()
                        .map(|&(a, b)| g1[exposure(a, b)] * 2 + g2[exposure(b, a)])
                        .collect();
                    stop = !emit(&t);
                });
            }
            Family::Spillover { sign } => {
                for_each_tuple(&[2, 2], |y| {
                    if *sign == SpilloverSign::None && y[0] != y[1] {
                        return;
                    }
                    if *sign == SpilloverSign::NonPositive && y[1] > y[0] {
                        return;
                    }
                    emit(y);
                });
            }
            Family::CessationLength { waves, monotone } => {
                let n = 1usize << waves;
                let len: Vec<usize> = (0..n).map(|b| spell_length(b, *waves)).collect();
                let mut stop = false;
                for_each_tuple(&[n, n, n], |t| {
                    if stop {
                        return;
                    }
                    let (a, b, c) = (len[t[0]], len[t[1]], len[t[2]]);
                    let ok = if *monotone { a <= b && b <= c } else { a == b && b == c };
                    if ok {
                        stop = !emit(t);
                    }
                });
            }
        }
    }

    /// Whether the family exposes a pairwise predicate (Method 1).
    pub fn has_predicate(&self) -> bool {
        true
    }

    /// Pairwise compatibility of cells in distinct parts `za != zb`.
    pub fn compatible(&self, za: usize, ra: usize, zb: usize, rb: usize) -> bool {
        debug_assert!(za != zb);
        match self {
            Family::IvExclusion { d, .. } => {
                let nd = d.len();
                let (ya, da, yb, db) = (ra / nd, ra % nd, rb / nd, rb % nd);
                da != db || ya == yb
            }
            Family::IvExclusionMonotonicity { d, .. } => {
                let nd = d.len();
                let (mut ya, mut da, mut yb, mut db) = (ra / nd, ra % nd, rb / nd, rb % nd);
                if za > zb {
                    std::mem::swap(&mut ya, &mut yb);
                    std::mem::swap(&mut da, &mut db);
                }
                da < db || (da == db && ya == yb)
            }
            Family::IaMonotonicity { .. } => {
                if za < zb {
                    ra <= rb
                } else {
                    rb <= ra
                }
            }
            Family::PartialMonotonicity { .. } => {
                if za & !zb == 0 {
                    ra <= rb
                } else if zb & !za == 0 {
                    rb <= ra
                } else {
                    true
                }
            }
            Family::MediationFull { mediators } => {
                let (ya, ma, yb, mb) = (ra / 4, ra % 4, rb / 4, rb % 4);
                let same_arg = match mediators {
                    Mediators::Both => ma == mb,
                    Mediators::First => ma >> 1 == mb >> 1,
                };
                !same_arg || ya == yb
            }
            Family::Exposure {
                semimonotone,
                assignments,
            } => {
                let (a1, a2) = assignments[za];
                let (b1, b2) = assignments[zb];
                let persons = [
                    (exposure(a1, a2), ra >> 1, exposure(b1, b2), rb >> 1),
                    (exposure(a2, a1), ra & 1, exposure(b2, b1), rb & 1),
                ];
                persons.iter().all(|&(ea, ya, eb, yb)| {
                    if ea == eb {
                        ya == yb
                    } else if !semimonotone {
                        true
                    } else if ea > eb {
                        ya <= yb
                    } else {
                        ya >= yb
                    }
                })
            }
            Family::Spillover { sign } => {
                let (y0, y1) = if za == 0 { (ra, rb) } else { (rb, ra) };
                match sign {
                    SpilloverSign::None => y0 == y1,
                    SpilloverSign::NonPositive => y1 <= y0,
                }
            }
            Family::CessationLength { waves, monotone } => {
                let (la, lb) = (spell_length(ra, *waves), spell_length(rb, *waves));
                if !monotone {
                    la == lb
                } else if za < zb {
                    la <= lb
                } else {
                    lb <= la
                }
            }
        }
    }
}
