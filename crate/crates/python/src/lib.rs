//! Python bindings. Small scalar results come back as native types; the
//! structured reports come back as JSON strings so the Python side sees
//! exactly what the CLI emits, field for field.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use specstab::dichotomy::{psl_step, LedgerConfig};
use specstab::fourier;
use specstab::groups::GroupSpec;
use specstab::harness;
use specstab::periodicity;
use specstab::spectrum as spec;
use specstab::structure;
use specstab::Rat;

fn err(e: specstab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rat_pair(r: Rat) -> (i128, i128) {
    (r.numer(), r.denom())
}

fn config_from(toml_text: Option<&str>) -> PyResult<LedgerConfig> {
    let cfg = match toml_text {
        None => LedgerConfig::default(),
        Some(text) => toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// A finite abelian group, fixed as a product of cyclic factors. Elements
/// are mixed-radix indices in `0..order`.
#[pyclass(frozen)]
struct Group {
    inner: GroupSpec,
}

#[pymethods]
impl Group {
    #[new]
    fn new(factors: Vec<u64>) -> PyResult<Self> {
        Ok(Group { inner: GroupSpec::new(factors).map_err(err)? })
    }

    #[staticmethod]
    fn cyclic(n: u64) -> PyResult<Self> {
        Ok(Group { inner: GroupSpec::cyclic(n).map_err(err)? })
    }

    #[getter]
    fn order(&self) -> u64 {
        self.inner.order()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn factors(&self) -> Vec<u64> {
        self.inner.factors().to_vec()
    }

    fn coords(&self, x: u64) -> PyResult<Vec<u64>> {
        self.check(x)?;
        Ok(self.inner.coords(x))
    }

    fn index(&self, coords: Vec<u64>) -> PyResult<u64> {
        self.inner.index_of(&coords).map_err(err)
    }

    fn add(&self, a: u64, b: u64) -> PyResult<u64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.inner.add(a, b))
    }

    fn neg(&self, a: u64) -> PyResult<u64> {
        self.check(a)?;
        Ok(self.inner.neg(a))
    }

    fn sub(&self, a: u64, b: u64) -> PyResult<u64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.inner.sub(a, b))
    }

    /// `chi_xi(x)` as `(re, im)`.
    fn char_value(&self, xi: u64, x: u64) -> PyResult<(f64, f64)> {
        self.check(xi)?;
        self.check(x)?;
        let c = self.inner.char_value(xi, x);
        Ok((c.re, c.im))
    }

    fn char_unit_distance(&self, xi: u64, x: u64) -> PyResult<f64> {
        self.check(xi)?;
        self.check(x)?;
        Ok(self.inner.char_unit_distance(xi, x))
    }

    fn __repr__(&self) -> String {
        let parts: Vec<String> = self.inner.factors().iter().map(|f| f.to_string()).collect();
        format!("Group(Z/{})", parts.join(" x Z/"))
    }

    fn __len__(&self) -> usize {
        self.inner.order() as usize
    }
}

impl Group {
    fn check(&self, x: u64) -> PyResult<()> {
        if x >= self.inner.order() {
            return Err(PyValueError::new_err(format!(
                "element {x} outside group of order {}",
                self.inner.order()
            )));
        }
        Ok(())
    }
}

/// Additive energy with its exact combinatorial bounds.
#[pyclass(frozen)]
struct Energy {
    #[pyo3(get)]
    combinatorial: u128,
    #[pyo3(get)]
    spectral: f64,
    #[pyo3(get)]
    rel_residual: f64,
    #[pyo3(get)]
    lower_bound: (i128, i128),
    #[pyo3(get)]
    upper_bound: u128,
    #[pyo3(get)]
    lower_ok: bool,
    #[pyo3(get)]
    upper_ok: bool,
}

#[pyfunction]
fn energy(g: &Group, a: Vec<u64>) -> PyResult<Energy> {
    let e = fourier::additive_energy(&g.inner, &a).map_err(err)?;
    Ok(Energy {
        combinatorial: e.combinatorial,
        spectral: e.spectral,
        rel_residual: e.rel_residual,
        lower_bound: rat_pair(e.lower_bound),
        upper_bound: e.upper_bound,
        lower_ok: e.lower_ok,
        upper_ok: e.upper_ok,
    })
}

/// `|A+A| / |A|` as an exact fraction `(num, den)`.
#[pyfunction]
fn doubling(g: &Group, a: Vec<u64>) -> PyResult<(i128, i128)> {
    Ok(rat_pair(fourier::doubling_constant(&g.inner, &a).map_err(err)?))
}

#[pyfunction]
fn sumset(g: &Group, a: Vec<u64>, b: Vec<u64>) -> PyResult<Vec<u64>> {
    fourier::sumset(&g.inner, &a, &b).map_err(err)
}

/// `|fhat(xi)|` for every `xi`, mean-normalized transform of the indicator.
#[pyfunction]
fn dft_magnitudes(g: &Group, a: Vec<u64>) -> PyResult<Vec<f64>> {
    let t = fourier::dft_set(&g.inner, &a).map_err(err)?;
    Ok((0..g.inner.order()).map(|xi| t.magnitude(xi)).collect())
}

/// Frequencies with `|fhat(xi)| >= tau * alpha`, with the threshold used.
#[pyfunction]
fn large_spectrum(g: &Group, a: Vec<u64>, tau: f64) -> PyResult<(f64, Vec<u64>)> {
    let s = spec::large_spectrum(&g.inner, &a, tau).map_err(err)?;
    Ok((s.threshold, s.members))
}

#[pyfunction]
#[pyo3(signature = (g, a, tau, c_rc = 8.0))]
fn chang(g: &Group, a: Vec<u64>, tau: f64, c_rc: f64) -> PyResult<String> {
    json(&spec::chang_audit(&g.inner, &a, tau, c_rc).map_err(err)?)
}

/// `B(freqs, rho)`: elements whose unit-circle distance stays at or under
/// `rho` on every listed frequency.
#[pyfunction]
fn bohr_set(g: &Group, freqs: Vec<u64>, rho: f64) -> PyResult<Vec<u64>> {
    Ok(periodicity::bohr_set(&g.inner, &freqs, rho).map_err(err)?.elements)
}

/// A sampled almost-periodicity shift packet.
#[pyclass(frozen)]
struct Packet {
    inner: periodicity::Packet,
}

#[pymethods]
impl Packet {
    #[getter]
    fn members(&self) -> Vec<u64> {
        self.inner.members.clone()
    }

    #[getter]
    fn success(&self) -> bool {
        self.inner.success
    }

    #[getter]
    fn achieved_bias(&self) -> f64 {
        self.inner.achieved_bias
    }

    #[getter]
    fn attempts(&self) -> u32 {
        self.inner.attempts
    }

    fn __len__(&self) -> usize {
        self.inner.members.len()
    }
}

#[pyfunction]
fn sample_packet(g: &Group, s: Vec<u64>, eps: f64, eta: f64, seed: u64) -> PyResult<Packet> {
    Ok(Packet { inner: periodicity::sample_packet(&g.inner, &s, eps, eta, seed).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (s_len, eps, eta, c_pkt = 2.0))]
fn packet_size(s_len: usize, eps: f64, eta: f64, c_pkt: f64) -> usize {
    periodicity::packet_size(s_len, eps, eta, c_pkt)
}

/// Shift-averaging report for the packet, as JSON.
#[pyfunction]
fn good_shifts(g: &Group, a: Vec<u64>, packet: &Packet) -> PyResult<String> {
    json(&periodicity::good_shifts(&g.inner, &a, &packet.inner).map_err(err)?)
}

/// One dichotomy step, as JSON.
#[pyfunction]
#[pyo3(signature = (g, a, config_toml = None))]
fn dichotomy_step(g: &Group, a: Vec<u64>, config_toml: Option<&str>) -> PyResult<String> {
    let cfg = config_from(config_toml)?;
    json(&psl_step(&g.inner, &a, &cfg).map_err(err)?)
}

/// The full iteration trace, as JSON.
#[pyfunction]
#[pyo3(signature = (g, a, config_toml = None, budget = None))]
fn iterate(g: &Group, a: Vec<u64>, config_toml: Option<&str>, budget: Option<u32>) -> PyResult<String> {
    let cfg = config_from(config_toml)?;
    json(&harness::iterate_psl(&g.inner, &a, &cfg, budget).map_err(err)?)
}

/// Energy, spectrum, compression, and dichotomy for one instance, as JSON:
/// `{"report": ..., "findings": [...]}`.
#[pyfunction]
#[pyo3(signature = (g, a, tau = None, config_toml = None))]
fn analyze(g: &Group, a: Vec<u64>, tau: Option<f64>, config_toml: Option<&str>) -> PyResult<String> {
    let cfg = config_from(config_toml)?;
    let (report, findings) = harness::analyze_set(&g.inner, &a, &cfg, tau).map_err(err)?;
    json(&serde_json::json!({ "report": report, "findings": findings }))
}

/// Exhaustive violation scan over the listed groups, as JSON.
#[pyfunction]
#[pyo3(signature = (groups, max_size, seed = 42, config_toml = None))]
fn scan(
    groups: Vec<Vec<u64>>,
    max_size: usize,
    seed: u64,
    config_toml: Option<&str>,
) -> PyResult<String> {
    let cfg = config_from(config_toml)?;
    let space = harness::ScanSpace::Exhaustive { groups, max_size };
    json(&harness::scan_for_violations(&space, &cfg, seed).map_err(err)?)
}

/// The sinc-profile interval example at density `alpha = num/den`, as JSON.
#[pyfunction]
#[pyo3(signature = (num, den, k = 3))]
fn toy_example(num: i128, den: i128, k: u32) -> PyResult<String> {
    json(&harness::toy_example(&LedgerConfig::default(), Rat::new(num, den), k).map_err(err)?)
}

/// Polynomial Bogolyubov containment report, as JSON.
#[pyfunction]
#[pyo3(signature = (g, a, config_toml = None))]
fn polybog(g: &Group, a: Vec<u64>, config_toml: Option<&str>) -> PyResult<String> {
    let cfg = config_from(config_toml)?;
    json(&periodicity::polybog_search(&g.inner, &a, &cfg).map_err(err)?)
}

/// Quotient lift audit through the subgroup generated by `gens`, as JSON.
#[pyfunction]
fn quotient_lift(g: &Group, a: Vec<u64>, gens: Vec<u64>) -> PyResult<String> {
    let h = specstab::groups::enumerate_subgroup(&g.inner, &gens).map_err(err)?;
    json(&structure::quotient_lift_check(&g.inner, &a, &h).map_err(err)?)
}

#[pymodule]
fn specstab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Group>()?;
    m.add_class::<Energy>()?;
    m.add_class::<Packet>()?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(doubling, m)?)?;
    m.add_function(wrap_pyfunction!(sumset, m)?)?;
    m.add_function(wrap_pyfunction!(dft_magnitudes, m)?)?;
    m.add_function(wrap_pyfunction!(large_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(chang, m)?)?;
    m.add_function(wrap_pyfunction!(bohr_set, m)?)?;
    m.add_function(wrap_pyfunction!(sample_packet, m)?)?;
    m.add_function(wrap_pyfunction!(packet_size, m)?)?;
    m.add_function(wrap_pyfunction!(good_shifts, m)?)?;
    m.add_function(wrap_pyfunction!(dichotomy_step, m)?)?;
    m.add_function(wrap_pyfunction!(iterate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(toy_example, m)?)?;
    m.add_function(wrap_pyfunction!(polybog, m)?)?;
    m.add_function(wrap_pyfunction!(quotient_lift, m)?)?;
    Ok(())
}
