//! The embedding model: anchor-item, dual-item, and user matrices, the
//! triple cohesion score, and its symmetrized variant.

mod io;
mod nce;
mod train;

pub use io::{load_model, save_model};
pub use nce::{build_nce_batch, nce_loss, nce_loss_and_grads, NceBatch, SparseGrads};
pub use train::{train, TrainConfig, TrainStats};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat, Scalar};

/// Three embedding matrices of shared dimension `d`: each item carries an
/// anchor vector and a dual vector, each user one vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleModel<S: Scalar = f32> {
    anchor_items: Mat<S>,
    dual_items: Mat<S>,
    users: Mat<S>,
}

impl<S: Scalar> TripleModel<S> {
    pub fn new(anchor_items: Mat<S>, dual_items: Mat<S>, users: Mat<S>) -> Self {
        assert_eq!(anchor_items.rows(), dual_items.rows(), "item matrices must match");
        assert_eq!(anchor_items.cols(), dual_items.cols(), "dims must match");
        assert_eq!(anchor_items.cols(), users.cols(), "dims must match");
        TripleModel {
            anchor_items,
            dual_items,
            users,
        }
    }

    /// All-zero model (useful as a fixed point in tests).
    pub fn zeros(items: usize, users: usize, dim: usize) -> Self {
        TripleModel {
            anchor_items: Mat::zeros(items, dim),
            dual_items: Mat::zeros(items, dim),
            users: Mat::zeros(users, dim),
        }
    }

    /// Uniform initialization in `[-scale, scale]`.
    pub fn init_random<R: Rng + ?Sized>(
        items: usize,
        users: usize,
        dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut fill = |rows: usize| {
            let data = (0..rows * dim)
                .map(|_| S::from_f64(rng.random_range(-scale..=scale)))
                .collect();
            Mat::from_vec(rows, dim, data)
        };
        let anchor_items = fill(items);
        let dual_items = fill(items);
        let users_m = fill(users);
        TripleModel {
            anchor_items,
            dual_items,
            users: users_m,
        }
    }

    pub fn dim(&self) -> usize {
        self.anchor_items.cols()
    }

    pub fn item_count(&self) -> usize {
        self.anchor_items.rows()
    }

    pub fn user_count(&self) -> usize {
        self.users.rows()
    }

    pub fn check_item(&self, i: u32) -> Result<()> {
        if (i as usize) < self.item_count() {
            Ok(())
        } else {
            Err(Error::IdOutOfRange {
                kind: "item",
                id: i,
                count: self.item_count(),
            })
        }
    }

    pub fn check_user(&self, u: u32) -> Result<()> {
        if (u as usize) < self.user_count() {
            Ok(())
        } else {
            Err(Error::IdOutOfRange {
                kind: "user",
                id: u,
                count: self.user_count(),
            })
        }
    }

    /// Anchor-side embedding of item `i` (row of P).
    #[inline]
    pub fn anchor(&self, i: u32) -> &[S] {
        self.anchor_items.row(i as usize)
    }

    /// Dual-side embedding of item `j` (row of Q).
    #[inline]
    pub fn dual(&self, j: u32) -> &[S] {
        self.dual_items.row(j as usize)
    }

    /// Embedding of user `u` (row of H).
    #[inline]
    pub fn user(&self, u: u32) -> &[S] {
        self.users.row(u as usize)
    }

    pub fn anchor_matrix(&self) -> &Mat<S> {
        &self.anchor_items
    }

    pub fn dual_matrix(&self) -> &Mat<S> {
        &self.dual_items
    }

    pub fn user_matrix(&self) -> &Mat<S> {
        &self.users
    }

    pub(crate) fn anchor_matrix_mut(&mut self) -> &mut Mat<S> {
        &mut self.anchor_items
    }

    pub(crate) fn dual_matrix_mut(&mut self) -> &mut Mat<S> {
        &mut self.dual_items
    }

    pub(crate) fn user_matrix_mut(&mut self) -> &mut Mat<S> {
        &mut self.users
    }

    pub fn all_finite(&self) -> bool {
        self.anchor_items.all_finite() && self.dual_items.all_finite() && self.users.all_finite()
    }

    /// Triple cohesion: `p_i·q_j + p_i·h_u + q_j·h_u`.
    pub fn cohesion_score(&self, u: u32, i: u32, j: u32) -> Result<f64> {
        self.check_user(u)?;
        self.check_item(i)?;
        self.check_item(j)?;
        let (p, q, h) = (self.anchor(i), self.dual(j), self.user(u));
        Ok(dot(p, q) + dot(p, h) + dot(q, h))
    }

    /// Average of the cohesion score and its dual-swapped counterpart:
    /// `(s(u,i,j) + s(u,j,i)) / 2`.
    pub fn symmetric_score(&self, u: u32, i: u32, j: u32) -> Result<f64> {
        Ok((self.cohesion_score(u, i, j)? + self.cohesion_score(u, j, i)?) / 2.0)
    }
}
