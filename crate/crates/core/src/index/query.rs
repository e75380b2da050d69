//! Query-vector construction for the two catalog layouts.

use crate::error::Result;
use crate::index::CatalogLayout;
use crate::model::TripleModel;

/// A retrieval query: the concatenated vector plus its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryVector {
    values: Vec<f32>,
    layout: CatalogLayout,
    /// None for anonymous queries (user blocks zeroed).
    pub user: Option<u32>,
    /// None for basket-averaged queries.
    pub anchor: Option<u32>,
}

impl QueryVector {
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn layout(&self) -> CatalogLayout {
        self.layout
    }
}

fn blocks(
    model: &TripleModel<f32>,
    user: Option<u32>,
    p: &[f32],
    q: &[f32],
    layout: CatalogLayout,
) -> Vec<f32> {
    let d = model.dim();
    let zero = vec![0.0f32; d];
    let h: &[f32] = match user {
        Some(u) => model.user(u),
        None => &zero,
    };
    let mut values = Vec::with_capacity(layout.width(d));
    values.extend_from_slice(p);
    values.extend_from_slice(h);
    if layout == CatalogLayout::Full {
        values.extend_from_slice(q);
        values.extend_from_slice(h);
    }
    values
}

/// Personalized full-layout query `[p_i h_u q_i h_u]`.
pub fn make_query_vector(model: &TripleModel<f32>, user: u32, anchor: u32) -> Result<QueryVector> {
    model.check_user(user)?;
    model.check_item(anchor)?;
    Ok(QueryVector {
        values: blocks(model, Some(user), model.anchor(anchor), model.dual(anchor), CatalogLayout::Full),
        layout: CatalogLayout::Full,
        user: Some(user),
        anchor: Some(anchor),
    })
}

/// Anonymous full-layout query `[p_i 0 q_i 0]`: the user blocks vanish,
/// so scores reduce to `p_i·q_j + q_i·p_j`.
pub fn make_query_vector_anonymous(model: &TripleModel<f32>, anchor: u32) -> Result<QueryVector> {
    model.check_item(anchor)?;
    Ok(QueryVector {
        values: blocks(model, None, model.anchor(anchor), model.dual(anchor), CatalogLayout::Full),
        layout: CatalogLayout::Full,
        user: None,
        anchor: Some(anchor),
    })
}

/// Asymmetric query `[p_i h_u]` against the 2d catalog `[q_j q_j]`; the
/// dot equals the cohesion score minus the per-query constant `p_i·h_u`.
pub fn make_query_vector_asymmetric(
    model: &TripleModel<f32>,
    user: Option<u32>,
    anchor: u32,
) -> Result<QueryVector> {
    if let Some(u) = user {
        model.check_user(u)?;
    }
    model.check_item(anchor)?;
    Ok(QueryVector {
        values: blocks(model, user, model.anchor(anchor), model.dual(anchor), CatalogLayout::Asymmetric),
        layout: CatalogLayout::Asymmetric,
        user,
        anchor: Some(anchor),
    })
}

/// Query built from the mean anchor/dual embeddings of several items,
/// used by the basket-average retrieval mode.
pub fn make_query_vector_averaged(
    model: &TripleModel<f32>,
    user: Option<u32>,
    items: &[u32],
    layout: CatalogLayout,
) -> Result<QueryVector> {
    assert!(!items.is_empty(), "cannot average an empty item set");
    if let Some(u) = user {
        model.check_user(u)?;
    }
    let d = model.dim();
    let mut p_mean = vec![0.0f64; d];
    let mut q_mean = vec![0.0f64; d];
    for &i in items {
        model.check_item(i)?;
        for (acc, &x) in p_mean.iter_mut().zip(model.anchor(i)) {
            *acc += x as f64;
        }
        for (acc, &x) in q_mean.iter_mut().zip(model.dual(i)) {
            *acc += x as f64;
        }
    }
    let inv = 1.0 / items.len() as f64;
    let p: Vec<f32> = p_mean.iter().map(|&x| (x * inv) as f32).collect();
    let q: Vec<f32> = q_mean.iter().map(|&x| (x * inv) as f32).collect();
    Ok(QueryVector {
        values: blocks(model, user, &p, &q, layout),
        layout,
        user,
        anchor: None,
    })
}
