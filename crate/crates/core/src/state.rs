use nalgebra::DVector;

/// `z = (x, v, s)`: modal coordinates (m), modal velocities (m/s) and
/// modified squeeze coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub s: DVector<f64>,
}

impl StateVector {
    pub fn zeros(n_beam: usize, n_squeeze: usize) -> Self {
        StateVector {
            x: DVector::zeros(n_beam),
            v: DVector::zeros(n_beam),
            s: DVector::zeros(n_squeeze),
        }
    }

    pub fn from_flat(z: &DVector<f64>, n_beam: usize) -> Self {
        let ms = z.len() - 2 * n_beam;
        StateVector {
            x: z.rows(0, n_beam).into_owned(),
            v: z.rows(n_beam, n_beam).into_owned(),
            s: z.rows(2 * n_beam, ms).into_owned(),
        }
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.len());
        let nm = self.x.len();
        z.rows_mut(0, nm).copy_from(&self.x);
        z.rows_mut(nm, nm).copy_from(&self.v);
        z.rows_mut(2 * nm, self.s.len()).copy_from(&self.s);
        z
    }

    pub fn len(&self) -> usize {
        2 * self.x.len() + self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.v.iter()).chain(self.s.iter()).all(|c| c.is_finite())
    }
}
