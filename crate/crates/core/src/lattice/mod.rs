//! Gaussian states of the two-beam field on a transverse lattice, and the
//! Gaussian channels acting on them.

mod channel;
mod grid;
mod state;
mod symplectic;

pub use channel::{symplectic_form, ChannelMap};
pub use grid::{Grid1D, Grid2D, MAX_GRID2D_PIXELS};
pub use state::{Beam, Beams, FieldState, Profile, Quad};
pub use symplectic::{check_physicality, ensure_physical, symplectic_eigenvalues, Physicality};

pub(crate) use state::quad_index as state_index;

/// Vacuum on both beams.
pub fn make_vacuum<T: crate::Real>(grid: Grid1D<T>) -> FieldState<T> {
    FieldState::vacuum(grid)
}
