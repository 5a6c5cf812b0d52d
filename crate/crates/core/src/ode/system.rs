//! Averaged learning dynamics as autonomous ODE systems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Adaptive random backpropagation flavour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Arbp,
    Asrbp,
}

/// Largest state vector the general linear builder accepts.
pub const MAX_STATE_ENTRIES: usize = 10_000;

/// Second-order statistics of the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    /// `Σ_TI = E(TIᵗ)`, `N_L × N_0`; `α` in the scalar case.
    pub sigma_ti: Matrix,
    /// `Σ_II = E(IIᵗ)`, `N_0 × N_0`; `β` in the scalar case.
    pub sigma_ii: Matrix,
    /// `E(‖T‖²)`.
    pub target_energy: f64,
}

impl Moments {
    /// Scalar moments with `E(T²) = α²/β`, which puts the minimum error at 0.
    pub fn scalar(alpha: f64, beta: f64) -> Self {
        let target_energy = if beta != 0.0 { alpha * alpha / beta } else { 0.0 };
        Self::scalar_with_energy(alpha, beta, target_energy)
    }

    pub fn scalar_with_energy(alpha: f64, beta: f64, target_energy: f64) -> Self {
        Self {
            sigma_ti: Matrix::scalar(alpha),
            sigma_ii: Matrix::scalar(beta),
            target_energy,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.sigma_ti.get(0, 0)
    }

    pub fn beta(&self) -> f64 {
        self.sigma_ii.get(0, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// `A[1, …, 1]` with `L` weights and `L − 1` channel weights.
    Chain { depth: usize, variant: Variant },
    /// `A[1,1,1]` trained with the STDP rule.
    ChainStdp,
    /// `A[1, N, 1]`, ARBP.
    Expansive { width: usize },
    /// `A[N_0, …, N_L]` with matrix weights. Compressive `A[N,1,N]` is the
    /// ARBP case with dims `[N, 1, N]`.
    GeneralLinear { dims: Vec<usize>, variant: Variant },
    /// `A[1,1,1]` with a power-function hidden unit `s^μ`, ARBP.
    NonlinearPower { mu: f64 },
}

/// One named block of the state vector, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.offset..self.offset + self.len()]
    }

    pub fn matrix(&self, x: &[f64]) -> Matrix {
        Matrix::new(self.rows, self.cols, self.slice(x).to_vec()).expect("block shape")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvariantClass {
    /// Channel weights track forward weights: a constant difference.
    Tracking,
    /// A conserved quadratic form.
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSpec {
    pub name: String,
    pub class: InvariantClass,
    id: InvariantId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum InvariantId {
    /// `x[i] − x[j]`.
    Difference(usize, usize),
    /// `w·x[i]² − x[j]²`.
    WeightedSquares(f64, usize, usize),
    /// `a² + b² − 2bc` for expansive unit `i`.
    ExpansiveQuadratic(usize),
    /// `S_b² − P²` with `S_b = Σb²`.
    SymmetricExpansive,
    /// `C − Bᵗ` between two state blocks, elementwise.
    TransposeDifference { c: usize, a: usize },
    /// `A Aᵗ − C Cᵗ`, elementwise.
    GramDifference { a: usize, c: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeSystem {
    pub name: String,
    pub kind: SystemKind,
    pub moments: Moments,
    blocks: Vec<Block>,
    len: usize,
}

fn scalar_blocks(names: &[String]) -> Vec<Block> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| Block {
            name: n.clone(),
            rows: 1,
            cols: 1,
            offset: i,
        })
        .collect()
}

fn check_scalar_moments(alpha: f64, beta: f64) -> Result<()> {
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::config("α and β must be finite"));
    }
    if beta == 0.0 {
        return Err(Error::config("β = 0 is the degenerate all-zero-input case"));
    }
    Ok(())
}

impl OdeSystem {
    /// Linear chain `A[1, …, 1]` of depth `L`; state `(a_1…a_L, c_1…c_{L−1})`.
    pub fn chain(depth: usize, variant: Variant, alpha: f64, beta: f64) -> Result<Self> {
        Self::chain_with(depth, variant, Moments::scalar(alpha, beta))
    }

    pub fn chain_with(depth: usize, variant: Variant, moments: Moments) -> Result<Self> {
        if depth < 2 {
            return Err(Error::config(format!("chain depth must be at least 2, got {depth}")));
        }
        check_scalar_moments(moments.alpha(), moments.beta())?;
        let names: Vec<String> = (1..=depth)
            .map(|i| format!("a{i}"))
            .chain((1..depth).map(|i| format!("c{i}")))
            .collect();
        let blocks = scalar_blocks(&names);
        let tag = match variant {
            Variant::Arbp => "arbp",
            Variant::Asrbp => "asrbp",
        };
        Ok(Self {
            name: format!("chain-{tag}-L{depth}"),
            kind: SystemKind::Chain { depth, variant },
            moments,
            len: blocks.len(),
            blocks,
        })
    }

    /// `A[1,1,1]` under STDP; state `(a_1, a_2, c_1)`.
    pub fn chain_stdp(alpha: f64, beta: f64) -> Result<Self> {
        Self::chain_stdp_with(Moments::scalar(alpha, beta))
    }

    pub fn chain_stdp_with(moments: Moments) -> Result<Self> {
        check_scalar_moments(moments.alpha(), moments.beta())?;
        let blocks = scalar_blocks(&["a1".into(), "a2".into(), "c1".into()]);
        Ok(Self {
            name: "chain-stdp".into(),
            kind: SystemKind::ChainStdp,
            moments,
            len: 3,
            blocks,
        })
    }

    /// `A[1,N,1]` ARBP; state blocks `a` (N×1), `b` (1×N), `c` (N×1).
    pub fn expansive(width: usize, alpha: f64, beta: f64) -> Result<Self> {
        Self::expansive_with(width, Moments::scalar(alpha, beta))
    }

    pub fn expansive_with(width: usize, moments: Moments) -> Result<Self> {
        if width == 0 {
            return Err(Error::config("expansive width must be at least 1"));
        }
        check_scalar_moments(moments.alpha(), moments.beta())?;
        let blocks = vec![
            Block { name: "a".into(), rows: width, cols: 1, offset: 0 },
            Block { name: "b".into(), rows: 1, cols: width, offset: width },
            Block { name: "c".into(), rows: width, cols: 1, offset: 2 * width },
        ];
        Ok(Self {
            name: format!("expansive-N{width}"),
            kind: SystemKind::Expansive { width },
            moments,
            len: 3 * width,
            blocks,
        })
    }

    /// `A[N,1,N]` ARBP: `A` (1×N), `B` (N×1), `C` (1×N).
    pub fn compressive(width: usize, sigma_ti: Matrix, sigma_ii: Matrix, target_energy: f64) -> Result<Self> {
        let mut sys = Self::general_linear(&[width, 1, width], Variant::Arbp, sigma_ti, sigma_ii, target_energy)?;
        sys.name = format!("compressive-N{width}");
        Ok(sys)
    }

    /// `A[N_0, …, N_L]`; state `A_1 … A_L` then `C_1 … C_{L−1}`.
    pub fn general_linear(
        dims: &[usize],
        variant: Variant,
        sigma_ti: Matrix,
        sigma_ii: Matrix,
        target_energy: f64,
    ) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::config("general linear systems need at least one hidden layer"));
        }
        if dims.contains(&0) {
            return Err(Error::config("layer sizes must be at least 1"));
        }
        let depth = dims.len() - 1;
        let (n0, nl) = (dims[0], dims[depth]);
        if sigma_ti.shape() != (nl, n0) || sigma_ii.shape() != (n0, n0) {
            return Err(Error::Dimension {
                op: "general_linear moments",
                lhs: sigma_ti.shape(),
                rhs: (nl, n0),
            });
        }
        let mut blocks = Vec::with_capacity(2 * depth - 1);
        let mut offset = 0;
        for i in 1..=depth {
            blocks.push(Block { name: format!("A{i}"), rows: dims[i], cols: dims[i - 1], offset });
            offset += dims[i] * dims[i - 1];
        }
        for i in 1..depth {
            let cols = match variant {
                Variant::Arbp => dims[i + 1],
                Variant::Asrbp => nl,
            };
            blocks.push(Block { name: format!("C{i}"), rows: dims[i], cols, offset });
            offset += dims[i] * cols;
        }
        if offset > MAX_STATE_ENTRIES {
            return Err(Error::config(format!(
                "state has {offset} entries, above the {MAX_STATE_ENTRIES} cap"
            )));
        }
        let tag = match variant {
            Variant::Arbp => "arbp",
            Variant::Asrbp => "asrbp",
        };
        let dim_tag: Vec<String> = dims.iter().map(usize::to_string).collect();
        Ok(Self {
            name: format!("general-{tag}-{}", dim_tag.join("x")),
            kind: SystemKind::GeneralLinear { dims: dims.to_vec(), variant },
            moments: Moments { sigma_ti, sigma_ii, target_energy },
            blocks,
            len: offset,
        })
    }

    /// `A[1,1,1]` with hidden transfer `s^μ`; `α' = E(TI^μ)`, `β' = E(I^{2μ})`.
    pub fn nonlinear_power(mu: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::nonlinear_power_with(mu, Moments::scalar(alpha, beta))
    }

    pub fn nonlinear_power_with(mu: f64, moments: Moments) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::config(format!("power exponent μ must be positive, got {mu}")));
        }
        check_scalar_moments(moments.alpha(), moments.beta())?;
        let blocks = scalar_blocks(&["a1".into(), "a2".into(), "c1".into()]);
        Ok(Self {
            name: format!("power-mu{mu}"),
            kind: SystemKind::NonlinearPower { mu },
            moments,
            len: 3,
            blocks,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// One label per state entry, e.g. `a1` or `A2[0,1]`.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len);
        for b in &self.blocks {
            if b.len() == 1 {
                names.push(b.name.clone());
            } else {
                for r in 0..b.rows {
                    for c in 0..b.cols {
                        names.push(format!("{}[{r},{c}]", b.name));
                    }
                }
            }
        }
        names
    }

    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len {
            return Err(Error::config(format!(
                "{}: state has {} entries, expected {}",
                self.name,
                x.len(),
                self.len
            )));
        }
        Ok(())
    }

    fn depth(&self) -> usize {
        match &self.kind {
            SystemKind::Chain { depth, .. } => *depth,
            SystemKind::GeneralLinear { dims, .. } => dims.len() - 1,
            _ => 2,
        }
    }

    /// Forward matrices `A_1 … A_L`.
    pub fn forward_matrices(&self, x: &[f64]) -> Vec<Matrix> {
        match &self.kind {
            SystemKind::Chain { depth, .. } => (0..*depth).map(|i| Matrix::scalar(x[i])).collect(),
            SystemKind::ChainStdp | SystemKind::NonlinearPower { .. } => {
                vec![Matrix::scalar(x[0]), Matrix::scalar(x[1])]
            }
            SystemKind::Expansive { .. } => vec![self.blocks[0].matrix(x), self.blocks[1].matrix(x)],
            SystemKind::GeneralLinear { .. } => {
                self.blocks[..self.depth()].iter().map(|b| b.matrix(x)).collect()
            }
        }
    }

    /// Channel matrices `C_1 … C_{L−1}`.
    pub fn channel_matrices(&self, x: &[f64]) -> Vec<Matrix> {
        match &self.kind {
            SystemKind::Chain { depth, .. } => (*depth..2 * depth - 1).map(|i| Matrix::scalar(x[i])).collect(),
            SystemKind::ChainStdp | SystemKind::NonlinearPower { .. } => vec![Matrix::scalar(x[2])],
            SystemKind::Expansive { .. } => vec![self.blocks[2].matrix(x)],
            SystemKind::GeneralLinear { .. } => {
                self.blocks[self.depth()..].iter().map(|b| b.matrix(x)).collect()
            }
        }
    }

    /// Packs forward and channel matrices back into a state vector.
    pub fn pack(&self, forward: &[Matrix], channel: &[Matrix]) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.len);
        for m in forward.iter().chain(channel) {
            x.extend_from_slice(m.data());
        }
        if let SystemKind::Expansive { width } = self.kind {
            // a and c are columns, b a row; data layout already matches.
            debug_assert_eq!(x.len(), 3 * width);
        }
        self.check_state(&x)?;
        Ok(x)
    }

    /// The scalar product `P` for 1-D systems (`a₂a₁^μ` for the power system).
    pub fn scalar_product(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            SystemKind::Chain { depth, .. } => Some(x[..*depth].iter().product()),
            SystemKind::ChainStdp => Some(x[0] * x[1]),
            SystemKind::Expansive { width } => Some((0..*width).map(|i| x[i] * x[width + i]).sum()),
            SystemKind::NonlinearPower { mu } => Some(x[1] * power(x[0], *mu)),
            SystemKind::GeneralLinear { .. } => None,
        }
    }

    /// `P = A_L ⋯ A_1`.
    pub fn product_matrix(&self, x: &[f64]) -> Matrix {
        if let Some(p) = self.scalar_product(x) {
            return Matrix::scalar(p);
        }
        let forward = self.forward_matrices(x);
        let mut p = forward[0].clone();
        for a in &forward[1..] {
            p = a.matmul(&p).expect("chained shapes");
        }
        p
    }

    /// `Σ_TI − PΣ_II`; `α − βP` for scalar systems.
    pub fn error_matrix(&self, x: &[f64]) -> Matrix {
        let p = self.product_matrix(x);
        let mut e = self.moments.sigma_ti.clone();
        e.add_scaled(-1.0, &p.matmul(&self.moments.sigma_ii).expect("moment shapes"))
            .expect("moment shapes");
        e
    }

    /// Distance from the fixed-point manifold: `|α − βP|` or `‖Σ_TI − PΣ_II‖_F`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.error_matrix(x).frobenius_norm()
    }

    /// `E = ½E‖T − PI‖²`.
    pub fn error(&self, x: &[f64]) -> f64 {
        let p = self.product_matrix(x);
        let cross: f64 = p.data().iter().zip(self.moments.sigma_ti.data()).map(|(a, b)| a * b).sum();
        let quad: f64 = p
            .matmul(&self.moments.sigma_ii)
            .expect("moment shapes")
            .data()
            .iter()
            .zip(p.data())
            .map(|(a, b)| a * b)
            .sum();
        0.5 * self.moments.target_energy - cross + 0.5 * quad
    }

    /// Analytic minimum `E(T²)/2 − α²/(2β)` for scalar systems.
    pub fn error_minimum(&self) -> Option<f64> {
        match self.kind {
            SystemKind::GeneralLinear { .. } => None,
            _ => {
                let (a, b) = (self.moments.alpha(), self.moments.beta());
                Some(0.5 * self.moments.target_energy - a * a / (2.0 * b))
            }
        }
    }

    /// Writes `dx/dt` into `out`.
    pub fn rhs(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.kind {
            SystemKind::Chain { depth, variant } => {
                self.chain_rhs(*depth, *variant, x, out);
                Ok(())
            }
            SystemKind::ChainStdp => {
                let (a1, a2, c1) = (x[0], x[1], x[2]);
                let p = a1 * a2;
                let r = self.moments.alpha() - self.moments.beta() * p;
                out[0] = c1 * r;
                out[1] = (a1 + c1 * p) * r;
                out[2] = c1 * p * r;
                Ok(())
            }
            SystemKind::Expansive { width } => {
                let n = *width;
                let p: f64 = (0..n).map(|i| x[i] * x[n + i]).sum();
                let r = self.moments.alpha() - self.moments.beta() * p;
                for i in 0..n {
                    out[i] = x[2 * n + i] * r;
                    out[n + i] = x[i] * r;
                    out[2 * n + i] = x[i] * r;
                }
                Ok(())
            }
            SystemKind::NonlinearPower { mu } => {
                let mu = *mu;
                let (a1, a2, c1) = (x[0], x[1], x[2]);
                if mu.fract() != 0.0 && a1 <= 0.0 {
                    return Err(Error::Domain(format!(
                        "a1 = {a1} left the domain a1 > 0 of the power system with μ = {mu}"
                    )));
                }
                let a1_mu = power(a1, mu);
                let r = self.moments.alpha() - self.moments.beta() * a2 * a1_mu;
                out[0] = mu * power(a1, mu - 1.0) * c1 * r;
                out[1] = a1_mu * r;
                out[2] = a1_mu * r;
                Ok(())
            }
            SystemKind::GeneralLinear { variant, .. } => self.general_rhs(*variant, x, out),
        }
    }

    fn chain_rhs(&self, depth: usize, variant: Variant, x: &[f64], out: &mut [f64]) {
        let a = &x[..depth];
        let c = &x[depth..];
        // prefix[i] = a_1⋯a_i (0-based: product of a[..i]).
        let mut prefix = vec![1.0; depth + 1];
        for i in 0..depth {
            prefix[i + 1] = prefix[i] * a[i];
        }
        let r = self.moments.alpha() - self.moments.beta() * prefix[depth];
        match variant {
            Variant::Arbp => {
                // suffix[i] = c_i⋯c_{L−1} (0-based: product of c[i..]); c_L = 1.
                let mut suffix = vec![1.0; depth];
                for i in (0..depth - 1).rev() {
                    suffix[i] = c[i] * suffix[i + 1];
                }
                for i in 0..depth {
                    out[i] = suffix[i] * prefix[i] * r;
                }
                for i in 0..depth - 1 {
                    out[depth + i] = prefix[i + 1] * suffix[i + 1] * r;
                }
            }
            Variant::Asrbp => {
                for i in 0..depth {
                    let ci = if i + 1 < depth { c[i] } else { 1.0 };
                    out[i] = ci * prefix[i] * r;
                }
                for i in 0..depth - 1 {
                    out[depth + i] = prefix[i + 1] * r;
                }
            }
        }
    }

    fn general_rhs(&self, variant: Variant, x: &[f64], out: &mut [f64]) -> Result<()> {
        let depth = self.depth();
        let a = self.forward_matrices(x);
        let c = self.channel_matrices(x);
        // lower[i] = A_i ⋯ A_1 (0-based: product of a[..=i]).
        let mut lower = Vec::with_capacity(depth);
        lower.push(a[0].clone());
        for i in 1..depth {
            let next = a[i].matmul(&lower[i - 1])?;
            lower.push(next);
        }
        let mut e = self.moments.sigma_ti.clone();
        e.add_scaled(-1.0, &lower[depth - 1].matmul(&self.moments.sigma_ii)?)?;
        let et = e.transpose();

        // chan[i] = C_i ⋯ C_{L−1} E (ARBP) or C_i E (ASRBP); chan[L−1] = E.
        let mut chan = vec![Matrix::zeros(0, 0); depth];
        chan[depth - 1] = e.clone();
        for i in (0..depth - 1).rev() {
            chan[i] = match variant {
                Variant::Arbp => c[i].matmul(&chan[i + 1])?,
                Variant::Asrbp => c[i].matmul(&e)?,
            };
        }
        for (i, block) in self.blocks[..depth].iter().enumerate() {
            let d = if i == 0 {
                chan[0].clone()
            } else {
                chan[i].matmul_nt(&lower[i - 1])?
            };
            out[block.offset..block.offset + block.len()].copy_from_slice(d.data());
        }
        // dC_i = A_i⋯A_1 Eᵗ C_{L−1}ᵗ⋯C_{i+1}ᵗ (ARBP) or A_i⋯A_1 Eᵗ (ASRBP).
        let mut upper_t = et.clone();
        let mut dcs = vec![Matrix::zeros(0, 0); depth - 1];
        for i in (0..depth - 1).rev() {
            let tail = match variant {
                Variant::Arbp => &upper_t,
                Variant::Asrbp => &et,
            };
            dcs[i] = lower[i].matmul(tail)?;
            if variant == Variant::Arbp {
                upper_t = upper_t.matmul_nt(&c[i])?;
            }
        }
        for (i, block) in self.blocks[depth..].iter().enumerate() {
            out[block.offset..block.offset + block.len()].copy_from_slice(dcs[i].data());
        }
        Ok(())
    }

    /// Conserved quantities registered for this system. Some only hold for
    /// special initial states and are registered only when `x0` is one.
    pub fn invariants(&self, x0: &[f64]) -> Vec<InvariantSpec> {
        let mut out = Vec::new();
        let tracking = |name: String, id| InvariantSpec { name, class: InvariantClass::Tracking, id };
        let quadratic = |name: String, id| InvariantSpec { name, class: InvariantClass::Quadratic, id };
        match &self.kind {
            SystemKind::Chain { depth, variant } => {
                let l = *depth;
                match variant {
                    Variant::Arbp => {
                        for i in 0..l - 1 {
                            out.push(tracking(format!("c{}-a{}", i + 1, i + 2), InvariantId::Difference(l + i, i + 1)));
                        }
                        for i in 0..l - 1 {
                            out.push(quadratic(
                                format!("a{}^2-c{}^2", i + 1, i + 1),
                                InvariantId::WeightedSquares(1.0, i, l + i),
                            ));
                        }
                    }
                    Variant::Asrbp => {
                        for i in 0..l - 1 {
                            out.push(quadratic(
                                format!("c{}^2-a{}^2", i + 1, i + 1),
                                InvariantId::WeightedSquares(1.0, l + i, i),
                            ));
                        }
                        out.push(tracking(format!("a{l}-c{}", l - 1), InvariantId::Difference(l - 1, 2 * l - 2)));
                    }
                }
            }
            SystemKind::ChainStdp => {}
            SystemKind::Expansive { width } => {
                let n = *width;
                for i in 0..n {
                    out.push(tracking(format!("c{}-b{}", i + 1, i + 1), InvariantId::Difference(2 * n + i, n + i)));
                }
                for i in 0..n {
                    out.push(quadratic(
                        format!("a{0}^2-b{0}^2-2K{0}b{0}", i + 1),
                        InvariantId::ExpansiveQuadratic(i),
                    ));
                }
                let symmetric = (0..n).all(|i| x0[2 * n + i] == x0[n + i] && x0[i].abs() == x0[n + i].abs());
                if symmetric {
                    out.push(quadratic("Sb^2-P^2".into(), InvariantId::SymmetricExpansive));
                }
            }
            SystemKind::NonlinearPower { mu } => {
                out.push(tracking("c1-a2".into(), InvariantId::Difference(2, 1)));
                out.push(quadratic("mu*c1^2-a1^2".into(), InvariantId::WeightedSquares(*mu, 2, 0)));
            }
            SystemKind::GeneralLinear { variant, .. } => {
                let depth = self.depth();
                match variant {
                    Variant::Arbp => {
                        for i in 0..depth - 1 {
                            out.push(tracking(
                                format!("C{}-A{}^t", i + 1, i + 2),
                                InvariantId::TransposeDifference { c: depth + i, a: i + 1 },
                            ));
                        }
                    }
                    Variant::Asrbp => out.push(tracking(
                        format!("C{}-A{}^t", depth - 1, depth),
                        InvariantId::TransposeDifference { c: 2 * depth - 2, a: depth - 1 },
                    )),
                }
                for i in 0..depth - 1 {
                    out.push(quadratic(
                        format!("A{0}A{0}^t-C{0}C{0}^t", i + 1),
                        InvariantId::GramDifference { a: i, c: depth + i },
                    ));
                }
            }
        }
        out
    }

    /// Values of one registered invariant (several entries for matrices).
    pub fn invariant_values(&self, spec: &InvariantSpec, x: &[f64]) -> Vec<f64> {
        match spec.id {
            InvariantId::Difference(i, j) => vec![x[i] - x[j]],
            InvariantId::WeightedSquares(w, i, j) => vec![w * x[i] * x[i] - x[j] * x[j]],
            InvariantId::ExpansiveQuadratic(i) => {
                let SystemKind::Expansive { width: n } = self.kind else { unreachable!() };
                let (a, b, c) = (x[i], x[n + i], x[2 * n + i]);
                vec![a * a + b * b - 2.0 * b * c]
            }
            InvariantId::SymmetricExpansive => {
                let SystemKind::Expansive { width: n } = self.kind else { unreachable!() };
                let sb: f64 = x[n..2 * n].iter().map(|b| b * b).sum();
                let p: f64 = (0..n).map(|i| x[i] * x[n + i]).sum();
                vec![sb * sb - p * p]
            }
            InvariantId::TransposeDifference { c, a } => {
                let cm = self.blocks[c].matrix(x);
                let am = self.blocks[a].matrix(x);
                cm.sub(&am.transpose()).expect("transpose shapes").into_data()
            }
            InvariantId::GramDifference { a, c } => {
                let am = self.blocks[a].matrix(x);
                let cm = self.blocks[c].matrix(x);
                let ga = am.matmul_nt(&am).expect("gram");
                ga.sub(&cm.matmul_nt(&cm).expect("gram")).expect("gram shapes").into_data()
            }
        }
    }

    /// Sets every channel matrix to make the tracking constants zero
    /// (`c_i = a_{i+1}`, `C_i = A_{i+1}ᵗ`, `c = b`).
    pub fn zero_tracking(&self, x: &mut [f64]) {
        match &self.kind {
            SystemKind::Chain { depth, variant } => match variant {
                Variant::Arbp => {
                    for i in 0..depth - 1 {
                        x[depth + i] = x[i + 1];
                    }
                }
                Variant::Asrbp => x[2 * depth - 2] = x[depth - 1],
            },
            SystemKind::ChainStdp | SystemKind::NonlinearPower { .. } => x[2] = x[1],
            SystemKind::Expansive { width } => {
                let n = *width;
                for i in 0..n {
                    x[2 * n + i] = x[n + i];
                }
            }
            SystemKind::GeneralLinear { variant, .. } => {
                let depth = self.depth();
                let pairs: Vec<(usize, usize)> = match variant {
                    Variant::Arbp => (0..depth - 1).map(|i| (depth + i, i + 1)).collect(),
                    Variant::Asrbp => vec![(2 * depth - 2, depth - 1)],
                };
                for (c, a) in pairs {
                    let at = self.blocks[a].matrix(x).transpose();
                    let b = &self.blocks[c];
                    x[b.offset..b.offset + b.len()].copy_from_slice(at.data());
                }
            }
        }
    }

    /// Hypotheses of the convergence results that fail at `x0`.
    pub fn hypothesis_notes(&self, x0: &[f64]) -> Vec<String> {
        let mut notes = Vec::new();
        match &self.kind {
            SystemKind::Chain { depth, variant: Variant::Asrbp } => {
                for i in 0..depth - 1 {
                    let k = x0[depth + i].powi(2) - x0[i].powi(2);
                    if k == 0.0 {
                        notes.push(format!("K{} = c{}^2 - a{}^2 = 0: convergence not guaranteed", i + 1, i + 1, i + 1));
                    }
                }
            }
            SystemKind::Expansive { width } => {
                let n = *width;
                if (0..n).all(|i| x0[i] + x0[2 * n + i] == 0.0) {
                    notes.push("R0 = (a + c)/2 = 0: the system is not convergent".into());
                }
            }
            SystemKind::NonlinearPower { mu } => {
                let k = mu * x0[2] * x0[2] - x0[0] * x0[0];
                if x0[2] != x0[1] && mu.fract() != 0.0 && *mu > 1.0 && k < 0.0 {
                    notes.push(format!("K = mu*c1^2 - a1^2 = {k} < 0 with non-integer mu: convergence not guaranteed"));
                }
            }
            _ => {}
        }
        notes
    }

    /// Sign-pattern classification of the reached root of the reduced 1-D
    /// equation `da_L/dt = Q(a_L)`, available for ARBP chains.
    pub fn classify_root(&self, x_final: &[f64], x0: &[f64]) -> Option<RootClass> {
        let SystemKind::Chain { depth, variant } = self.kind else { return None };
        if variant == Variant::Asrbp && depth > 2 {
            return None;
        }
        let l = depth;
        let k: Vec<f64> = (0..l - 1).map(|i| x0[l + i] - x0[i + 1]).collect();
        let j: Vec<f64> = (0..l - 1).map(|i| x0[i] * x0[i] - x0[l + i] * x0[l + i]).collect();
        let signs: Vec<f64> = (0..l - 1).map(|i| if x_final[i] < 0.0 { -1.0 } else { 1.0 }).collect();
        let q = |z: f64| -> Option<f64> {
            let mut x = vec![0.0; 2 * l - 1];
            x[l - 1] = z;
            for i in (0..l - 1).rev() {
                let ci = x[i + 1] + k[i];
                let sq = ci * ci + j[i];
                if sq < 0.0 {
                    return None;
                }
                x[l + i] = ci;
                x[i] = signs[i] * sq.sqrt();
            }
            let mut out = vec![0.0; 2 * l - 1];
            self.chain_rhs(l, Variant::Arbp, &x, &mut out);
            Some(out[l - 1])
        };
        let root = x_final[l - 1];
        let eps = 1e-4 * root.abs().max(1.0);
        let sign = |v: f64| if v > 0.0 { Sign::Plus } else if v < 0.0 { Sign::Minus } else { Sign::Zero };
        let left = sign(q(root - eps)?);
        let right = sign(q(root + eps)?);
        Some(RootClass::new(root, left, right))
    }
}

fn power(x: f64, mu: f64) -> f64 {
    if mu.fract() == 0.0 && mu.abs() <= i32::MAX as f64 {
        x.powi(mu as i32)
    } else {
        x.powf(mu)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sign {
    Plus,
    Minus,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    /// `+−`.
    Attractor,
    /// `−+`.
    Unstable,
    /// `++`: attracts from the left, repels to the right.
    AttractorLeft,
    /// `−−`: repels to the left, attracts from the right.
    AttractorRight,
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootClass {
    pub root: f64,
    pub left: Sign,
    pub right: Sign,
    pub stability: Stability,
}

impl RootClass {
    pub fn new(root: f64, left: Sign, right: Sign) -> Self {
        Self { root, left, right, stability: classify_signs(left, right) }
    }

    pub fn pattern(&self) -> String {
        let s = |v: Sign| match v {
            Sign::Plus => '+',
            Sign::Minus => '-',
            Sign::Zero => '0',
        };
        format!("{}{}", s(self.left), s(self.right))
    }
}

/// Stability of a root of `dx/dt = f(x)` from the signs of `f` on either side.
pub fn classify_signs(left: Sign, right: Sign) -> Stability {
    match (left, right) {
        (Sign::Plus, Sign::Minus) => Stability::Attractor,
        (Sign::Minus, Sign::Plus) => Stability::Unstable,
        (Sign::Plus, Sign::Plus) => Stability::AttractorLeft,
        (Sign::Minus, Sign::Minus) => Stability::AttractorRight,
        _ => Stability::Degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rhs(sys: &OdeSystem, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; sys.len()];
        sys.rhs(x, &mut out).unwrap();
        out
    }

    #[test]
    fn two_layer_chain_matches_scalar_system() {
        let sys = OdeSystem::chain(2, Variant::Arbp, 1.3, 0.7).unwrap();
        let (a1, a2, c1) = (0.4, -0.2, 0.9);
        let r = 1.3 - 0.7 * a1 * a2;
        assert_eq!(rhs(&sys, &[a1, a2, c1]), vec![c1 * r, a1 * r, a1 * r]);
    }

    #[test]
    fn zero_state_is_stationary() {
        let sys = OdeSystem::chain(4, Variant::Arbp, 1.0, 1.0).unwrap();
        assert!(rhs(&sys, &[0.0; 7]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_layer_chain_first_component() {
        let sys = OdeSystem::chain(3, Variant::Arbp, 1.0, 2.0).unwrap();
        let x = [0.3, -0.7, 0.5, 0.2, -0.4];
        let r = 1.0 - 2.0 * 0.3 * -0.7 * 0.5;
        assert!((rhs(&sys, &x)[0] - 0.2 * -0.4 * r).abs() < 1e-15);
    }

    #[test]
    fn sign_patterns() {
        assert_eq!(classify_signs(Sign::Plus, Sign::Minus), Stability::Attractor);
        assert_eq!(classify_signs(Sign::Minus, Sign::Plus), Stability::Unstable);
        assert_eq!(classify_signs(Sign::Plus, Sign::Plus), Stability::AttractorLeft);
        assert_eq!(classify_signs(Sign::Minus, Sign::Minus), Stability::AttractorRight);
    }

    #[test]
    fn general_reduces_to_chain_and_compressive() {
        let chain = OdeSystem::chain(3, Variant::Arbp, 0.8, 1.1).unwrap();
        let gen = OdeSystem::general_linear(&[1, 1, 1, 1], Variant::Arbp, Matrix::scalar(0.8), Matrix::scalar(1.1), 0.0).unwrap();
        let x = [0.3, -0.7, 0.5, 0.2, -0.4];
        let (a, b) = (rhs(&chain, &x), rhs(&gen, &x));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-15);
        }
        let chain = OdeSystem::chain(3, Variant::Asrbp, 0.8, 1.1).unwrap();
        let gen = OdeSystem::general_linear(&[1, 1, 1, 1], Variant::Asrbp, Matrix::scalar(0.8), Matrix::scalar(1.1), 0.0).unwrap();
        let (a, b) = (rhs(&chain, &x), rhs(&gen, &x));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn expansive_width_one_is_chain() {
        let e = OdeSystem::expansive(1, 1.0, 0.5).unwrap();
        let c = OdeSystem::chain(2, Variant::Arbp, 1.0, 0.5).unwrap();
        let x = [0.2, 0.6, -0.1];
        assert_eq!(rhs(&e, &x), rhs(&c, &x));
    }

    #[test]
    fn power_mu_one_is_chain() {
        let p = OdeSystem::nonlinear_power(1.0, 1.0, 0.5).unwrap();
        let c = OdeSystem::chain(2, Variant::Arbp, 1.0, 0.5).unwrap();
        let x = [0.2, 0.6, -0.1];
        assert_eq!(rhs(&p, &x), rhs(&c, &x));
        let half = OdeSystem::nonlinear_power(0.5, 1.0, 1.0).unwrap();
        let mut out = [0.0; 3];
        assert!(matches!(half.rhs(&[-0.1, 0.2, 0.3], &mut out), Err(Error::Domain(_))));
    }

    #[test]
    fn builder_errors() {
        assert!(OdeSystem::chain(1, Variant::Arbp, 1.0, 1.0).is_err());
        assert!(OdeSystem::chain(3, Variant::Arbp, 1.0, 0.0).is_err());
        assert!(OdeSystem::nonlinear_power(0.0, 1.0, 1.0).is_err());
        let big = OdeSystem::general_linear(&[100, 60, 100], Variant::Arbp, Matrix::zeros(100, 100), Matrix::zeros(100, 100), 0.0);
        assert!(big.is_err());
    }

    #[test]
    fn chain_l4_has_three_tracking_invariants() {
        let sys = OdeSystem::chain(4, Variant::Arbp, 1.0, 1.0).unwrap();
        let inv = sys.invariants(&[0.1; 7]);
        assert_eq!(inv.iter().filter(|i| i.class == InvariantClass::Tracking).count(), 3);
    }
}
