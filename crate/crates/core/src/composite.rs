//! Composite (bundle) manifolds ⟨M₁, …, Mₙ⟩ with blockwise ◇ operations and
//! block-structured Jacobians.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::groups::{Pose2, Pose3, Rot2, Rot3, TransN, UnitComplex, UnitQuaternion};
use crate::lie::{check_dim, Action, Jac, LieGroup, Manifold, Tangent};

/// The closed set of group kinds a composite can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKind {
    UnitComplex,
    Rot2,
    UnitQuaternion,
    Rot3,
    Pose2,
    Pose3,
    Trans(usize),
}

impl GroupKind {
    pub fn dof(&self) -> usize {
        match self {
            Self::UnitComplex | Self::Rot2 => 1,
            Self::UnitQuaternion | Self::Rot3 | Self::Pose2 => 3,
            Self::Pose3 => 6,
            Self::Trans(n) => *n,
        }
    }

    /// Exp of a tangent vector into a group of this kind.
    pub fn exp(&self, tau: &Tangent) -> Result<GroupElement> {
        check_dim(self.dof(), tau.len())?;
        Ok(match self {
            Self::UnitComplex => GroupElement::UnitComplex(UnitComplex::exp(tau)?),
            Self::Rot2 => GroupElement::Rot2(Rot2::exp(tau)?),
            Self::UnitQuaternion => GroupElement::UnitQuaternion(UnitQuaternion::exp(tau)?),
            Self::Rot3 => GroupElement::Rot3(Rot3::exp(tau)?),
            Self::Pose2 => GroupElement::Pose2(Pose2::exp(tau)?),
            Self::Pose3 => GroupElement::Pose3(Pose3::exp(tau)?),
            Self::Trans(_) => GroupElement::Trans(TransN::exp(tau)?),
        })
    }

    pub fn identity(&self) -> GroupElement {
        self.exp(&Tangent::zeros(self.dof())).expect("zero tangent has the right size")
    }

    pub fn jr(&self, tau: &Tangent) -> Result<Jac> {
        kind_dispatch!(self, G => G::jr(tau))
    }

    pub fn jl(&self, tau: &Tangent) -> Result<Jac> {
        kind_dispatch!(self, G => G::jl(tau))
    }

    pub fn jr_inv(&self, tau: &Tangent) -> Result<Jac> {
        kind_dispatch!(self, G => G::jr_inv(tau))
    }

    pub fn jl_inv(&self, tau: &Tangent) -> Result<Jac> {
        kind_dispatch!(self, G => G::jl_inv(tau))
    }
}

macro_rules! kind_dispatch {
    ($self:expr, $g:ident => $body:expr) => {
        match $self {
            GroupKind::UnitComplex => {
                type $g = UnitComplex;
                $body
            }
            GroupKind::Rot2 => {
                type $g = Rot2;
                $body
            }
            GroupKind::UnitQuaternion => {
                type $g = UnitQuaternion;
                $body
            }
            GroupKind::Rot3 => {
                type $g = Rot3;
                $body
            }
            GroupKind::Pose2 => {
                type $g = Pose2;
                $body
            }
            GroupKind::Pose3 => {
                type $g = Pose3;
                $body
            }
            GroupKind::Trans(_) => {
                type $g = TransN;
                $body
            }
        }
    };
}
use kind_dispatch;

/// A single element of any of the implemented groups.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupElement {
    UnitComplex(UnitComplex),
    Rot2(Rot2),
    UnitQuaternion(UnitQuaternion),
    Rot3(Rot3),
    Pose2(Pose2),
    Pose3(Pose3),
    Trans(TransN),
}

macro_rules! dispatch {
    ($self:expr, $g:ident => $body:expr) => {
        match $self {
            GroupElement::UnitComplex($g) => $body,
            GroupElement::Rot2($g) => $body,
            GroupElement::UnitQuaternion($g) => $body,
            GroupElement::Rot3($g) => $body,
            GroupElement::Pose2($g) => $body,
            GroupElement::Pose3($g) => $body,
            GroupElement::Trans($g) => $body,
        }
    };
}

macro_rules! dispatch_map {
    ($self:expr, $g:ident => $body:expr) => {
        match $self {
            GroupElement::UnitComplex($g) => GroupElement::UnitComplex($body),
            GroupElement::Rot2($g) => GroupElement::Rot2($body),
            GroupElement::UnitQuaternion($g) => GroupElement::UnitQuaternion($body),
            GroupElement::Rot3($g) => GroupElement::Rot3($body),
            GroupElement::Pose2($g) => GroupElement::Pose2($body),
            GroupElement::Pose3($g) => GroupElement::Pose3($body),
            GroupElement::Trans($g) => GroupElement::Trans($body),
        }
    };
}

macro_rules! dispatch_pair {
    ($a:expr, $b:expr, $x:ident, $y:ident => $body:expr) => {
        match ($a, $b) {
            (GroupElement::UnitComplex($x), GroupElement::UnitComplex($y)) => Ok(GroupElement::UnitComplex($body)),
            (GroupElement::Rot2($x), GroupElement::Rot2($y)) => Ok(GroupElement::Rot2($body)),
            (GroupElement::UnitQuaternion($x), GroupElement::UnitQuaternion($y)) => {
                Ok(GroupElement::UnitQuaternion($body))
            }
            (GroupElement::Rot3($x), GroupElement::Rot3($y)) => Ok(GroupElement::Rot3($body)),
            (GroupElement::Pose2($x), GroupElement::Pose2($y)) => Ok(GroupElement::Pose2($body)),
            (GroupElement::Pose3($x), GroupElement::Pose3($y)) => Ok(GroupElement::Pose3($body)),
            (GroupElement::Trans($x), GroupElement::Trans($y)) if $x.len() == $y.len() => {
                Ok(GroupElement::Trans($body))
            }
            (a, b) => Err(Error::LayoutMismatch(format!("{:?} vs {:?}", a.kind(), b.kind()))),
        }
    };
}

macro_rules! dispatch_pair_tangent {
    ($a:expr, $b:expr, $x:ident, $y:ident => $body:expr) => {
        match ($a, $b) {
            (GroupElement::UnitComplex($x), GroupElement::UnitComplex($y)) => $body,
            (GroupElement::Rot2($x), GroupElement::Rot2($y)) => $body,
            (GroupElement::UnitQuaternion($x), GroupElement::UnitQuaternion($y)) => $body,
            (GroupElement::Rot3($x), GroupElement::Rot3($y)) => $body,
            (GroupElement::Pose2($x), GroupElement::Pose2($y)) => $body,
            (GroupElement::Pose3($x), GroupElement::Pose3($y)) => $body,
            (GroupElement::Trans($x), GroupElement::Trans($y)) => $body,
            (a, b) => Err(Error::LayoutMismatch(format!("{:?} vs {:?}", a.kind(), b.kind()))),
        }
    };
}

impl GroupElement {
    pub fn kind(&self) -> GroupKind {
        match self {
            Self::UnitComplex(_) => GroupKind::UnitComplex,
            Self::Rot2(_) => GroupKind::Rot2,
            Self::UnitQuaternion(_) => GroupKind::UnitQuaternion,
            Self::Rot3(_) => GroupKind::Rot3,
            Self::Pose2(_) => GroupKind::Pose2,
            Self::Pose3(_) => GroupKind::Pose3,
            Self::Trans(t) => GroupKind::Trans(t.len()),
        }
    }

    pub fn dof(&self) -> usize {
        dispatch!(self, g => Manifold::dof(g))
    }

    pub fn log(&self) -> Tangent {
        dispatch!(self, g => g.log())
    }

    pub fn adj(&self) -> Jac {
        dispatch!(self, g => g.adj())
    }

    pub fn inverse(&self) -> Self {
        dispatch_map!(self, g => g.inverse())
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        dispatch_pair!(self, other, a, b => a.compose(b))
    }

    pub fn rplus(&self, tau: &Tangent) -> Result<Self> {
        Ok(dispatch_map!(self, g => Manifold::rplus(g, tau)?))
    }

    pub fn lplus(&self, tau: &Tangent) -> Result<Self> {
        Ok(dispatch_map!(self, g => Manifold::lplus(g, tau)?))
    }

    pub fn rminus(&self, other: &Self) -> Result<Tangent> {
        dispatch_pair_tangent!(self, other, a, b => Manifold::rminus(a, b))
    }

    pub fn lminus(&self, other: &Self) -> Result<Tangent> {
        dispatch_pair_tangent!(self, other, a, b => Manifold::lminus(a, b))
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        dispatch!(self, g => g.is_valid(tol))
    }

    pub fn adj_inv(&self) -> Jac {
        dispatch!(self, g => g.adj_inv())
    }

    /// ∂X⁻¹/∂X.
    pub fn jac_inverse(&self) -> Jac {
        dispatch!(self, g => g.jac_inverse())
    }

    pub fn point_dim(&self) -> usize {
        dispatch!(self, g => g.point_dim())
    }

    /// X·p.
    pub fn act(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        dispatch!(self, g => g.act(p))
    }

    pub fn jac_act_x(&self, p: &DVector<f64>) -> Result<Jac> {
        dispatch!(self, g => g.jac_act_x(p))
    }

    pub fn jac_act_p(&self, p: &DVector<f64>) -> Result<Jac> {
        dispatch!(self, g => g.jac_act_p(p))
    }

    pub fn as_pose2(&self) -> Option<&Pose2> {
        match self {
            Self::Pose2(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_pose3(&self) -> Option<&Pose3> {
        match self {
            Self::Pose3(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_trans(&self) -> Option<&TransN> {
        match self {
            Self::Trans(t) => Some(t),
            _ => None,
        }
    }
}

macro_rules! impl_from_element {
    ($($v:ident),*) => {
        $(
            impl From<$v> for GroupElement {
                fn from(g: $v) -> Self {
                    GroupElement::$v(g)
                }
            }
        )*
    };
}
impl_from_element!(UnitComplex, Rot2, UnitQuaternion, Rot3, Pose2, Pose3);

impl From<TransN> for GroupElement {
    fn from(t: TransN) -> Self {
        GroupElement::Trans(t)
    }
}

impl Manifold for GroupElement {
    fn dof(&self) -> usize {
        GroupElement::dof(self)
    }
    fn rplus(&self, tau: &Tangent) -> Result<Self> {
        GroupElement::rplus(self, tau)
    }
    fn rminus(&self, other: &Self) -> Result<Tangent> {
        GroupElement::rminus(self, other)
    }
    fn lplus(&self, tau: &Tangent) -> Result<Self> {
        GroupElement::lplus(self, tau)
    }
    fn lminus(&self, other: &Self) -> Result<Tangent> {
        GroupElement::lminus(self, other)
    }
}

/// Stable handle of a block inside a composite, assigned at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

/// Per-block tangent offsets and sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    dofs: Vec<usize>,
    offsets: Vec<usize>,
}

impl Layout {
    pub fn new(dofs: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(dofs.len());
        let mut acc = 0;
        for d in &dofs {
            offsets.push(acc);
            acc += d;
        }
        Self { dofs, offsets }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn total(&self) -> usize {
        self.offsets.last().map_or(0, |o| o + self.dofs[self.dofs.len() - 1])
    }

    pub fn offset(&self, id: BlockId) -> usize {
        self.offsets[id.0]
    }

    pub fn dof(&self, id: BlockId) -> usize {
        self.dofs[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = BlockId> {
        (0..self.dofs.len()).map(BlockId)
    }

    pub fn check_id(&self, id: BlockId) -> Result<()> {
        if id.0 < self.dofs.len() {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!("block {} out of {}", id.0, self.dofs.len())))
        }
    }
}

/// ⟨X₁, …, Xₙ⟩. The block order is fixed once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeElement {
    blocks: Vec<GroupElement>,
    layout: Layout,
}

impl CompositeElement {
    pub fn new(blocks: Vec<GroupElement>) -> Self {
        let layout = Layout::new(blocks.iter().map(|b| b.dof()).collect());
        Self { blocks, layout }
    }

    pub fn identity(kinds: &[GroupKind]) -> Self {
        Self::new(kinds.iter().map(|k| k.identity()).collect())
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn kinds(&self) -> Vec<GroupKind> {
        self.blocks.iter().map(|b| b.kind()).collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn total_dof(&self) -> usize {
        self.layout.total()
    }

    pub fn blocks(&self) -> &[GroupElement] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &GroupElement {
        &self.blocks[id.0]
    }

    pub fn get(&self, id: BlockId) -> Option<&GroupElement> {
        self.blocks.get(id.0)
    }

    /// Copy with block `id` replaced by an element of the same kind.
    pub fn with_block(&self, id: BlockId, g: GroupElement) -> Result<Self> {
        self.layout.check_id(id)?;
        if g.kind() != self.blocks[id.0].kind() {
            return Err(Error::LayoutMismatch(format!(
                "block {} is {:?}, got {:?}",
                id.0,
                self.blocks[id.0].kind(),
                g.kind()
            )));
        }
        let mut out = self.clone();
        out.blocks[id.0] = g;
        Ok(out)
    }

    /// Segment of a stacked tangent belonging to block `id`.
    pub fn segment(&self, tau: &Tangent, id: BlockId) -> Tangent {
        tau.rows(self.layout.offset(id), self.layout.dof(id)).into_owned()
    }

    fn check_same_layout(&self, other: &Self) -> Result<()> {
        if self.kinds() != other.kinds() {
            return Err(Error::LayoutMismatch(format!("{:?} vs {:?}", self.kinds(), other.kinds())));
        }
        Ok(())
    }

    fn check_tangent(&self, tau: &Tangent) -> Result<()> {
        if tau.len() != self.total_dof() {
            return Err(Error::LayoutMismatch(format!(
                "tangent of size {} for composite of dof {}",
                tau.len(),
                self.total_dof()
            )));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Self {
        Self { blocks: self.blocks.iter().map(|b| b.inverse()).collect(), layout: self.layout.clone() }
    }

    /// X ◇ Y, blockwise.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.compose(b)).collect::<Result<_>>()?;
        Ok(Self { blocks, layout: self.layout.clone() })
    }

    /// Log⟨X⟩, stacked.
    pub fn log(&self) -> Tangent {
        let mut out = Tangent::zeros(self.total_dof());
        for (id, b) in self.layout.ids().zip(&self.blocks) {
            out.rows_mut(self.layout.offset(id), self.layout.dof(id)).copy_from(&b.log());
        }
        out
    }

    /// Exp⟨τ⟩ for the given block kinds.
    pub fn exp(kinds: &[GroupKind], tau: &Tangent) -> Result<Self> {
        let layout = Layout::new(kinds.iter().map(|k| k.dof()).collect());
        if tau.len() != layout.total() {
            return Err(Error::LayoutMismatch(format!("tangent of size {} for dof {}", tau.len(), layout.total())));
        }
        let blocks = kinds
            .iter()
            .zip(layout.ids())
            .map(|(k, id)| k.exp(&tau.rows(layout.offset(id), layout.dof(id)).into_owned()))
            .collect::<Result<_>>()?;
        Ok(Self { blocks, layout })
    }

    fn map_blocks(&self, tau: &Tangent, f: impl Fn(&GroupElement, &Tangent) -> Result<GroupElement>) -> Result<Self> {
        self.check_tangent(tau)?;
        let blocks = self
            .layout
            .ids()
            .zip(&self.blocks)
            .map(|(id, b)| f(b, &self.segment(tau, id)))
            .collect::<Result<_>>()?;
        Ok(Self { blocks, layout: self.layout.clone() })
    }

    fn zip_tangent(&self, other: &Self, f: impl Fn(&GroupElement, &GroupElement) -> Result<Tangent>) -> Result<Tangent> {
        self.check_same_layout(other)?;
        let mut out = Tangent::zeros(self.total_dof());
        for (id, (a, b)) in self.layout.ids().zip(self.blocks.iter().zip(&other.blocks)) {
            out.rows_mut(self.layout.offset(id), self.layout.dof(id)).copy_from(&f(a, b)?);
        }
        Ok(out)
    }

    /// X ⊞ τ = X ◇ Exp⟨τ⟩.
    pub fn dplus(&self, tau: &Tangent) -> Result<Self> {
        self.map_blocks(tau, |b, t| b.rplus(t))
    }

    /// Y ⊟ X = Log⟨X^◇ ◇ Y⟩, with `self` as Y.
    pub fn dminus(&self, x: &Self) -> Result<Tangent> {
        self.zip_tangent(x, |a, b| a.rminus(b))
    }
}

impl Manifold for CompositeElement {
    fn dof(&self) -> usize {
        self.total_dof()
    }
    fn rplus(&self, tau: &Tangent) -> Result<Self> {
        self.dplus(tau)
    }
    fn rminus(&self, other: &Self) -> Result<Tangent> {
        self.dminus(other)
    }
    fn lplus(&self, tau: &Tangent) -> Result<Self> {
        self.map_blocks(tau, |b, t| b.lplus(t))
    }
    fn lminus(&self, other: &Self) -> Result<Tangent> {
        self.zip_tangent(other, |a, b| a.lminus(b))
    }
}

/// Block-structured Jacobian ∂f/∂X with rows laid out by the output blocks and
/// columns by the input blocks. Unset blocks are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockJacobian {
    rows: Layout,
    cols: Layout,
    dense: Jac,
}

impl BlockJacobian {
    pub fn zeros(rows: Layout, cols: Layout) -> Self {
        let dense = Jac::zeros(rows.total(), cols.total());
        Self { rows, cols, dense }
    }

    pub fn set(&mut self, row: BlockId, col: BlockId, block: &Jac) -> Result<()> {
        self.rows.check_id(row)?;
        self.cols.check_id(col)?;
        let (r, c) = (self.rows.dof(row), self.cols.dof(col));
        if block.shape() != (r, c) {
            return Err(Error::LayoutMismatch(format!("block ({}, {}) expects {r}×{c}, got {:?}", row.0, col.0, block.shape())));
        }
        self.dense.view_mut((self.rows.offset(row), self.cols.offset(col)), (r, c)).copy_from(block);
        Ok(())
    }

    pub fn block(&self, row: BlockId, col: BlockId) -> Jac {
        self.dense
            .view((self.rows.offset(row), self.cols.offset(col)), (self.rows.dof(row), self.cols.dof(col)))
            .into_owned()
    }

    pub fn dense(&self) -> &Jac {
        &self.dense
    }

    pub fn into_dense(self) -> Jac {
        self.dense
    }

    pub fn row_layout(&self) -> &Layout {
        &self.rows
    }

    pub fn col_layout(&self) -> &Layout {
        &self.cols
    }
}

/// Assembles ∂f/∂X from per-block derivatives ∂fᵢ/∂Xⱼ.
pub fn jac_composite<I>(rows: &Layout, cols: &Layout, blocks: I) -> Result<BlockJacobian>
where
    I: IntoIterator<Item = (BlockId, BlockId, Jac)>,
{
    let mut j = BlockJacobian::zeros(rows.clone(), cols.clone());
    for (r, c, b) in blocks {
        j.set(r, c, &b)?;
    }
    Ok(j)
}

/// Stacks vectors into one tangent following `layout`.
pub fn stack(layout: &Layout, parts: &[DVector<f64>]) -> Result<Tangent> {
    check_dim(layout.len(), parts.len())?;
    let mut out = Tangent::zeros(layout.total());
    for (id, p) in layout.ids().zip(parts) {
        check_dim(layout.dof(id), p.len())?;
        out.rows_mut(layout.offset(id), p.len()).copy_from(p);
    }
    Ok(out)
}
