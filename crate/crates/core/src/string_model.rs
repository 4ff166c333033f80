//! Krein strings: a length, a right boundary condition and a mass measure made of
//! closed-form density pieces plus point atoms.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, GL5};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RightBoundary {
    /// `R = inf`, no condition at the right end.
    Natural,
    /// `R < inf`, `phi(R) = 0`.
    Dirichlet,
}

/// Density on one piece. `Power` is `c (b + e y)^p`, `PowerProduct` multiplies in a
/// second factor `(b2 + e2 y)^p2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DensityForm<T> {
    Constant { c: T },
    Power { c: T, b: T, e: T, p: T },
    PowerProduct { c: T, b: T, e: T, p: T, b2: T, e2: T, p2: T },
}

fn factor<T: Real>(b: T, e: T, p: T, y: T) -> T {
    (b + e * y).powf(p)
}

/// `int_l^r (b + e y)^p dy` without cancellation for short intervals.
fn power_mass<T: Real>(b: T, e: T, p: T, l: T, r: T) -> T {
    let u = b + e * l;
    if e == T::zero() {
        return u.powf(p) * (r - l);
    }
    if r.is_infinite() {
        let q = p + T::one();
        return if q < T::zero() {
            -u.powf(q) / (e * q)
        } else {
            T::infinity()
        };
    }
    let w = b + e * r;
    if p == -T::one() {
        return if u > T::zero() {
            (e * (r - l) / u).ln_1p() / e
        } else {
            T::infinity()
        };
    }
    let q = p + T::one();
    if u > T::zero() {
        u.powf(q) * (q * (e * (r - l) / u).ln_1p()).exp_m1() / (e * q)
    } else {
        // Base vanishes at the left end.
        w.powf(q) / (e * q)
    }
}

impl<T: Real> DensityForm<T> {
    pub fn eval(&self, y: T) -> T {
        match *self {
            DensityForm::Constant { c } => c,
            DensityForm::Power { c, b, e, p } => c * factor(b, e, p, y),
            DensityForm::PowerProduct { c, b, e, p, b2, e2, p2 } => {
                c * factor(b, e, p, y) * factor(b2, e2, p2, y)
            }
        }
    }

    /// `int_l^r a(y) dy`.
    pub fn mass(&self, l: T, r: T) -> T {
        match *self {
            DensityForm::Constant { c } => c * (r - l),
            DensityForm::Power { c, b, e, p } => {
                if c == T::zero() {
                    T::zero()
                } else {
                    c * power_mass(b, e, p, l, r)
                }
            }
            DensityForm::PowerProduct { .. } => {
                let form = *self;
                let f = move |y: f64| form.eval(T::lit(y)).as_f64();
                let (lo, hi) = (l.as_f64(), r.as_f64());
                let value = if hi.is_infinite() {
                    // y = lo + t / (1 - t)
                    quadrature::integrate(
                        |t| {
                            let s = 1.0 - t;
                            f(lo + t / s) / (s * s)
                        },
                        0.0,
                        1.0,
                        0.0,
                        1e-14,
                    )
                    .0
                } else {
                    quadrature::integrate(f, lo, hi, 0.0, 1e-14).0
                };
                T::lit(value)
            }
        }
    }

    /// Mass and first centred moment `int_l^r (m - t) a(t) dt`, `m = (l + r) / 2`, of a
    /// single integration step.
    pub(crate) fn step_moments(&self, l: T, r: T) -> (T, T) {
        let h = r - l;
        let half = T::lit(0.5);
        match *self {
            DensityForm::Constant { c } => (c * h, T::zero()),
            DensityForm::Power { c, b, e, p } if p < T::zero() => {
                let m = self.mass(l, r);
                let q = p + T::one();
                let shape = half / q - T::one() / (p + T::lit(2.0));
                if b + e * l == T::zero() {
                    return (m, c * e.powf(p) * h.powf(p + T::lit(2.0)) * shape);
                }
                if b + e * r == T::zero() {
                    return (m, -c * (-e).powf(p) * h.powf(p + T::lit(2.0)) * shape);
                }
                (m, self.gauss_moment(l, r))
            }
            DensityForm::Power { .. } => (self.mass(l, r), self.gauss_moment(l, r)),
            DensityForm::PowerProduct { .. } => {
                let mid = half * (l + r);
                let mut m = T::zero();
                let mut q = T::zero();
                for &(x, w) in GL5.iter() {
                    let t = mid + half * h * T::lit(x);
                    let v = T::lit(w) * self.eval(t);
                    m += v;
                    q += v * (mid - t);
                }
                (m * half * h, q * half * h)
            }
        }
    }

    fn gauss_moment(&self, l: T, r: T) -> T {
        let half = T::lit(0.5);
        let mid = half * (l + r);
        let h = r - l;
        let mut q = T::zero();
        for &(x, w) in GL5.iter() {
            let t = mid + half * h * T::lit(x);
            q += T::lit(w) * self.eval(t) * (mid - t);
        }
        q * half * h
    }

    fn is_zero(&self) -> bool {
        match *self {
            DensityForm::Constant { c }
            | DensityForm::Power { c, .. }
            | DensityForm::PowerProduct { c, .. } => c == T::zero(),
        }
    }

    fn factors(&self) -> Vec<(T, T, T)> {
        match *self {
            DensityForm::Constant { .. } => Vec::new(),
            DensityForm::Power { b, e, p, .. } => vec![(b, e, p)],
            DensityForm::PowerProduct { b, e, p, b2, e2, p2, .. } => vec![(b, e, p), (b2, e2, p2)],
        }
    }

    /// Exponent of a factor that vanishes at `y` with a negative power, if any.
    pub(crate) fn blow_up_exponent(&self, y: T) -> Option<T> {
        if self.is_zero() {
            return None;
        }
        self.factors()
            .into_iter()
            .filter(|&(b, e, p)| b + e * y == T::zero() && p < T::zero())
            .map(|f| f.2)
            .reduce(|a, b| a + b)
    }

    fn params(&self) -> Vec<T> {
        match *self {
            DensityForm::Constant { c } => vec![c],
            DensityForm::Power { c, b, e, p } => vec![c, b, e, p],
            DensityForm::PowerProduct { c, b, e, p, b2, e2, p2 } => vec![c, b, e, p, b2, e2, p2],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityPiece<T> {
    pub left: T,
    pub right: T,
    pub form: DensityForm<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom<T> {
    pub position: T,
    pub mass: T,
}

/// A validated Krein string.
#[derive(Clone, Debug, PartialEq)]
pub struct KreinString<T> {
    length: T,
    boundary: RightBoundary,
    pieces: Vec<DensityPiece<T>>,
    atoms: Vec<Atom<T>>,
    label: Option<String>,
}

impl<T: Real> KreinString<T> {
    /// Validates and normalises (sorts) the pieces and atoms.
    pub fn new(
        length: T,
        boundary: RightBoundary,
        mut pieces: Vec<DensityPiece<T>>,
        mut atoms: Vec<Atom<T>>,
        label: Option<String>,
    ) -> Result<Self> {
        if length.is_nan() || length <= T::zero() {
            return Err(Error::Validation(format!("length R must be positive, got {length}")));
        }
        match boundary {
            RightBoundary::Natural if length.is_finite() => {
                return Err(Error::Validation(
                    "natural right boundary needs R = inf".into(),
                ))
            }
            RightBoundary::Dirichlet if length.is_infinite() => {
                return Err(Error::Validation(
                    "Dirichlet right boundary needs finite R".into(),
                ))
            }
            _ => {}
        }
        pieces.retain(|p| !p.form.is_zero());
        pieces.sort_by(|a, b| a.left.partial_cmp(&b.left).unwrap_or(std::cmp::Ordering::Equal));
        for (i, piece) in pieces.iter().enumerate() {
            validate_piece(i, piece, length)?;
            if i > 0 && pieces[i - 1].right > piece.left {
                return Err(Error::Validation(format!(
                    "pieces overlap: [{}, {}) and [{}, {})",
                    pieces[i - 1].left,
                    pieces[i - 1].right,
                    piece.left,
                    piece.right
                )));
            }
        }
        atoms.sort_by(|a, b| {
            a.position
                .partial_cmp(&b.position)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for (i, atom) in atoms.iter().enumerate() {
            if !atom.position.is_finite() || atom.position < T::zero() || atom.position >= length {
                return Err(Error::Validation(format!(
                    "atoms[{i}]: position {} outside [0, R)",
                    atom.position
                )));
            }
            if !atom.mass.is_finite() || atom.mass <= T::zero() {
                return Err(Error::Validation(format!(
                    "atoms[{i}]: mass must be positive and finite, got {}",
                    atom.mass
                )));
            }
            if i > 0 && atoms[i - 1].position == atom.position {
                return Err(Error::Validation(format!(
                    "atoms[{i}]: duplicate position {}",
                    atom.position
                )));
            }
        }
        Ok(KreinString {
            length,
            boundary,
            pieces,
            atoms,
            label,
        })
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn right_boundary(&self) -> RightBoundary {
        self.boundary
    }

    pub fn is_natural(&self) -> bool {
        self.boundary == RightBoundary::Natural
    }

    pub fn pieces(&self) -> &[DensityPiece<T>] {
        &self.pieces
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Piece containing `y` (half-open `[l, r)`), if any.
    pub fn piece_at(&self, y: T) -> Option<&DensityPiece<T>> {
        self.pieces.iter().find(|p| p.left <= y && y < p.right)
    }

    /// Density of the absolutely continuous part at `y`.
    pub fn density(&self, y: T) -> T {
        self.piece_at(y).map_or(T::zero(), |p| p.form.eval(y))
    }

    /// `m([0, y))`, atoms at `y` excluded.
    pub fn cumulative_mass(&self, y: T) -> Result<T> {
        if y.is_nan() || y < T::zero() || y > self.length {
            return Err(Error::Domain(format!(
                "cumulative_mass: y = {y} outside [0, {}]",
                self.length
            )));
        }
        let mut total = T::zero();
        for piece in &self.pieces {
            if piece.left >= y {
                break;
            }
            total += piece.form.mass(piece.left, piece.right.min(y));
        }
        for atom in &self.atoms {
            if atom.position < y {
                total += atom.mass;
            }
        }
        Ok(total)
    }

    /// Right end of the support of the measure; `None` when the support is unbounded.
    pub fn support_end(&self) -> Option<T> {
        let mut end = T::zero();
        for piece in &self.pieces {
            if piece.right.is_infinite() {
                return None;
            }
            end = end.max(piece.right);
        }
        for atom in &self.atoms {
            end = end.max(atom.position);
        }
        Some(end)
    }

    /// Sorted finite piece endpoints and atom positions.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut points: Vec<T> = self
            .pieces
            .iter()
            .flat_map(|p| [p.left, p.right])
            .chain(self.atoms.iter().map(|a| a.position))
            .filter(|y| y.is_finite())
            .collect();
        points.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        points.dedup();
        points
    }

    /// Exponent of a density blow-up at a finite `R`, if the density is singular there.
    pub fn right_singularity(&self) -> Option<T> {
        if self.length.is_infinite() {
            return None;
        }
        let last = self.pieces.last()?;
        if last.right < self.length {
            return None;
        }
        last.form.blow_up_exponent(self.length)
    }

    /// The same string with an atom at the origin removed, and that atom's mass.
    pub fn split_origin_atom(&self) -> (KreinString<T>, T) {
        match self.atoms.first() {
            Some(a) if a.position == T::zero() => {
                let mut stripped = self.clone();
                stripped.atoms.remove(0);
                (stripped, a.mass)
            }
            _ => (self.clone(), T::zero()),
        }
    }

    /// Parses the JSON string-spec document.
    pub fn from_spec_json(text: &str) -> Result<Self> {
        let spec: StringSpec =
            serde_json::from_str(text).map_err(|e| Error::parse("string-spec", e.to_string()))?;
        spec.build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_spec_json(&text)
    }

    /// Serialises to the JSON string-spec document. Round-trips exactly.
    pub fn to_spec_json(&self) -> String {
        let spec = StringSpec {
            length: Bound::from_value(self.length.as_f64()),
            right_boundary: self.boundary,
            pieces: self
                .pieces
                .iter()
                .map(|p| PieceSpec {
                    l: p.left.as_f64(),
                    r: Bound::from_value(p.right.as_f64()),
                    form: FormSpec::from_form(&p.form),
                })
                .collect(),
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomSpec {
                    y: a.position.as_f64(),
                    m: a.mass.as_f64(),
                })
                .collect(),
            label: self.label.clone(),
        };
        serde_json::to_string_pretty(&spec).expect("string-spec serialises")
    }
}

fn validate_piece<T: Real>(i: usize, piece: &DensityPiece<T>, length: T) -> Result<()> {
    let (l, r) = (piece.left, piece.right);
    let ctx = |msg: String| Error::Validation(format!("pieces[{i}]: {msg}"));
    if !l.is_finite() || l < T::zero() || r.is_nan() || l >= r || r > length {
        return Err(ctx(format!("interval [{l}, {r}) not inside [0, {length}]")));
    }
    let params = piece.form.params();
    if params.iter().any(|v| !v.is_finite()) {
        return Err(ctx("non-finite density parameter".into()));
    }
    if params[0] < T::zero() {
        return Err(ctx(format!("negative density coefficient c = {}", params[0])));
    }
    let product = matches!(piece.form, DensityForm::PowerProduct { .. });
    for (b, e, p) in piece.form.factors() {
        if b == T::zero() && e == T::zero() {
            return Err(ctx("degenerate base b = e = 0".into()));
        }
        let at_l = b + e * l;
        let at_r = if r.is_finite() { b + e * r } else { e };
        if at_l < T::zero() || at_r < T::zero() {
            return Err(ctx("density base b + e y becomes negative on the piece".into()));
        }
        if p < T::zero() && at_l == T::zero() && (product || p <= -T::one()) {
            return Err(ctx(format!(
                "density not integrable at the left end y = {l} (power {p})"
            )));
        }
        if p <= -T::one() && r.is_finite() && b + e * r == T::zero() && r < length {
            return Err(ctx(format!(
                "density not integrable at the interior point y = {r} (power {p})"
            )));
        }
    }
    if r.is_infinite() && piece.form.mass(l, l + T::one()).is_infinite() {
        return Err(ctx("density not locally integrable".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// File format

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Bound {
    Number(f64),
    Text(String),
}

impl Bound {
    fn from_value(v: f64) -> Self {
        if v.is_infinite() {
            Bound::Text("inf".into())
        } else {
            Bound::Number(v)
        }
    }

    fn value(&self, field: &str) -> Result<f64> {
        match self {
            Bound::Number(v) => Ok(*v),
            Bound::Text(s) if s == "inf" || s == "infinity" => Ok(f64::INFINITY),
            Bound::Text(s) => Err(Error::parse(field, format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StringSpec {
    #[serde(rename = "R")]
    length: Bound,
    right_boundary: RightBoundary,
    #[serde(default)]
    pieces: Vec<PieceSpec>,
    #[serde(default)]
    atoms: Vec<AtomSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PieceSpec {
    l: f64,
    r: Bound,
    form: FormSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomSpec {
    y: f64,
    m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormSpec {
    kind: String,
    c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p2: Option<f64>,
}

impl FormSpec {
    fn from_form<T: Real>(form: &DensityForm<T>) -> Self {
        let v = form.params().into_iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let at = |i: usize| v.get(i).copied();
        let kind = match form {
            DensityForm::Constant { .. } => "const",
            DensityForm::Power { .. } => "power",
            DensityForm::PowerProduct { .. } => "power_product",
        };
        FormSpec {
            kind: kind.into(),
            c: v[0],
            b: at(1),
            e: at(2),
            p: at(3),
            b2: at(4),
            e2: at(5),
            p2: at(6),
        }
    }

    fn build<T: Real>(&self, i: usize) -> Result<DensityForm<T>> {
        let field = |name: &str| format!("pieces[{i}].form.{name}");
        let need = |v: Option<f64>, name: &str| {
            v.map(T::lit)
                .ok_or_else(|| Error::parse(field(name), format!("required for kind {:?}", self.kind)))
        };
        let forbid = |v: Option<f64>, name: &str| match v {
            Some(_) => Err(Error::parse(field(name), format!("not allowed for kind {:?}", self.kind))),
            None => Ok(()),
        };
        let c = T::lit(self.c);
        match self.kind.as_str() {
            "const" => {
                forbid(self.b, "b")?;
                forbid(self.e, "e")?;
                forbid(self.p, "p")?;
                forbid(self.b2, "b2")?;
                forbid(self.e2, "e2")?;
                forbid(self.p2, "p2")?;
                Ok(DensityForm::Constant { c })
            }
            "power" => {
                forbid(self.b2, "b2")?;
                forbid(self.e2, "e2")?;
                forbid(self.p2, "p2")?;
                Ok(DensityForm::Power {
                    c,
                    b: need(self.b, "b")?,
                    e: need(self.e, "e")?,
                    p: need(self.p, "p")?,
                })
            }
            "power_product" => Ok(DensityForm::PowerProduct {
                c,
                b: need(self.b, "b")?,
                e: need(self.e, "e")?,
                p: need(self.p, "p")?,
                b2: need(self.b2, "b2")?,
                e2: need(self.e2, "e2")?,
                p2: need(self.p2, "p2")?,
            }),
            other => Err(Error::parse(
                field("kind"),
                format!("unknown form {other:?}, expected const, power or power_product"),
            )),
        }
    }
}

impl StringSpec {
    fn build<T: Real>(&self) -> Result<KreinString<T>> {
        let length = self.length.value("R")?;
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (i, p) in self.pieces.iter().enumerate() {
            pieces.push(DensityPiece {
                left: T::lit(p.l),
                right: T::lit(p.r.value(&format!("pieces[{i}].r"))?),
                form: p.form.build(i)?,
            });
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                position: T::lit(a.y),
                mass: T::lit(a.m),
            })
            .collect();
        KreinString::new(T::lit(length), self.right_boundary, pieces, atoms, self.label.clone())
    }
}

// ---------------------------------------------------------------------------
// Catalog

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 10] = [
    "half_laplacian",
    "caffarelli_silvestre",
    "water_wave",
    "strip_dirichlet",
    "zero",
    "unit_zero",
    "atom",
    "quasi_relativistic",
    "quasi_relativistic_plus",
    "sqrt_shift",
];

/// Splits `name(p1,p2)` into the name and its numeric parameters.
pub fn parse_builtin_call(text: &str) -> Result<(String, Vec<f64>)> {
    let text = text.trim();
    let Some(open) = text.find('(') else {
        return Ok((text.to_string(), Vec::new()));
    };
    let inner = text[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| Error::parse("builtin", format!("missing ')' in {text:?}")))?;
    let params = inner
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse("builtin", format!("bad parameter {s:?} in {text:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((text[..open].trim().to_string(), params))
}

fn fmt_label(name: &str, params: &[f64]) -> String {
    if params.is_empty() {
        return name.to_string();
    }
    let mut out = format!("{name}(");
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{p}");
    }
    out.push(')');
    out
}

/// Catalog string by name. `caffarelli_silvestre` takes `alpha`, `atom` takes
/// optional `(y0, m)` defaulting to `(1, 1)`; the rest take no parameters.
pub fn builtin<T: Real>(name: &str, params: &[f64]) -> Result<KreinString<T>> {
    let lit = T::lit;
    let inf = T::infinity();
    let expect = |n: usize| {
        if params.len() == n {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "builtin {name} takes {n} parameter(s), got {}",
                params.len()
            )))
        }
    };
    let piece = |l: T, r: T, form: DensityForm<T>| DensityPiece { left: l, right: r, form };
    let one = DensityForm::Constant { c: T::one() };
    let natural = RightBoundary::Natural;
    let dirichlet = RightBoundary::Dirichlet;
    let label = Some(fmt_label(name, params));
    match name {
        "half_laplacian" => {
            expect(0)?;
            KreinString::new(inf, natural, vec![piece(T::zero(), inf, one)], vec![], label)
        }
        "caffarelli_silvestre" => {
            expect(1)?;
            let alpha = params[0];
            if !(alpha > 0.0 && alpha < 2.0) {
                return Err(Error::Validation(format!(
                    "caffarelli_silvestre needs 0 < alpha < 2, got {alpha}"
                )));
            }
            let form = DensityForm::Power {
                c: lit(1.0 / (alpha * alpha)),
                b: T::zero(),
                e: T::one(),
                p: lit(2.0 / alpha - 2.0),
            };
            KreinString::new(inf, natural, vec![piece(T::zero(), inf, form)], vec![], label)
        }
        "water_wave" => {
            expect(0)?;
            KreinString::new(inf, natural, vec![piece(T::zero(), T::one(), one)], vec![], label)
        }
        "strip_dirichlet" => {
            expect(0)?;
            KreinString::new(T::one(), dirichlet, vec![piece(T::zero(), T::one(), one)], vec![], label)
        }
        "zero" => {
            expect(0)?;
            KreinString::new(inf, natural, vec![], vec![], label)
        }
        "unit_zero" => {
            expect(0)?;
            KreinString::new(T::one(), dirichlet, vec![], vec![], label)
        }
        "atom" => {
            let (y0, m) = match params {
                [] => (1.0, 1.0),
                [y0, m] => (*y0, *m),
                _ => return Err(Error::Validation("builtin atom takes (y0, m)".into())),
            };
            let label = Some(fmt_label(name, &[y0, m]));
            KreinString::new(
                inf,
                natural,
                vec![],
                vec![Atom {
                    position: lit(y0),
                    mass: lit(m),
                }],
                label,
            )
        }
        "quasi_relativistic" => {
            expect(0)?;
            let form = DensityForm::Power {
                c: T::one(),
                b: T::one(),
                e: lit(2.0),
                p: lit(-2.0),
            };
            KreinString::new(inf, natural, vec![piece(T::zero(), inf, form)], vec![], label)
        }
        "quasi_relativistic_plus" => {
            expect(0)?;
            let form = DensityForm::Power {
                c: T::one(),
                b: T::one(),
                e: lit(-2.0),
                p: lit(-2.0),
            };
            KreinString::new(lit(0.5), dirichlet, vec![piece(T::zero(), lit(0.5), form)], vec![], label)
        }
        "sqrt_shift" => {
            expect(0)?;
            let form = DensityForm::PowerProduct {
                c: T::one(),
                b: T::one(),
                e: -T::one(),
                p: lit(-2.0),
                b2: T::one(),
                e2: T::one(),
                p2: lit(-2.0),
            };
            KreinString::new(T::one(), dirichlet, vec![piece(T::zero(), T::one(), form)], vec![], label)
        }
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

/// Parses `name` or `name(p, ...)` and builds the catalog string.
pub fn builtin_from_call<T: Real>(text: &str) -> Result<KreinString<T>> {
    let (name, params) = parse_builtin_call(text)?;
    builtin(&name, &params)
}
