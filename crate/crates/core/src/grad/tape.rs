use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Scalar;

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Append-only record of elementary operations for reverse-mode
/// differentiation. Each evaluation owns its tape; nothing is shared
/// between threads.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(capacity)),
        }
    }

    /// Drops all recorded nodes, keeping the allocation.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers an independent input variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(Node {
            parents: [NO_PARENT; 2],
            partials: [0.0; 2],
        });
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        assert!(idx < NO_PARENT as usize, "tape overflow");
        nodes.push(node);
        idx as u32
    }

    /// Adjoint of `output` with respect to each of `inputs`.
    pub fn gradient(&self, output: Var<'_>, inputs: &[Var<'_>]) -> Vec<f64> {
        let Some(_) = output.tape else {
            return vec![0.0; inputs.len()];
        };
        let nodes = self.nodes.borrow();
        let top = output.idx as usize;
        let mut adjoint = vec![0.0; top + 1];
        adjoint[top] = 1.0;
        for i in (0..=top).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for k in 0..2 {
                let p = node.parents[k];
                if p != NO_PARENT {
                    adjoint[p as usize] += node.partials[k] * a;
                }
            }
        }
        inputs
            .iter()
            .map(|v| match v.tape {
                Some(_) if (v.idx as usize) <= top => adjoint[v.idx as usize],
                _ => 0.0,
            })
            .collect()
    }
}

/// A scalar recorded on a [`Tape`]. Constants carry no tape and cost nothing.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{}: {})", self.idx, self.val),
            None => write!(f, "Var(const {})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    #[inline]
    fn konst(val: f64) -> Self {
        Var {
            tape: None,
            idx: NO_PARENT,
            val,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    #[inline]
    fn unary(self, val: f64, partial: f64) -> Self {
        match self.tape {
            None => Self::konst(val),
            Some(_) if partial == 0.0 => Self::konst(val),
            Some(tape) => Var {
                tape: Some(tape),
                idx: tape.push(Node {
                    parents: [self.idx, NO_PARENT],
                    partials: [partial, 0.0],
                }),
                val,
            },
        }
    }

    #[inline]
    fn binary(a: Self, b: Self, val: f64, da: f64, db: f64) -> Self {
        match (a.tape, b.tape) {
            (None, None) => Self::konst(val),
            (Some(_), None) => a.unary(val, da),
            (None, Some(_)) => b.unary(val, db),
            (Some(tape), Some(_)) => Var {
                tape: Some(tape),
                idx: tape.push(Node {
                    parents: [a.idx, b.idx],
                    partials: [da, db],
                }),
                val,
            },
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let val = self.val / rhs.val;
        Var::binary(self, rhs, val, 1.0 / rhs.val, -val / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        self.unary(self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

impl<'t> Scalar for Var<'t> {
    #[inline]
    fn constant(value: f64) -> Self {
        Var::konst(value)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.val
    }
    #[inline]
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    #[inline]
    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.unary(r, 0.5 / r)
    }
    #[inline]
    fn acos(self) -> Self {
        self.unary(self.val.acos(), -1.0 / (1.0 - self.val * self.val).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(-2.0);
        let f = x * y + x.sin();
        let g = tape.gradient(f, &[x, y]);
        assert_eq!(f.value(), 3.0 * -2.0 + 3.0f64.sin());
        assert!((g[0] - (-2.0 + 3.0f64.cos())).abs() < 1e-15);
        assert_eq!(g[1], 3.0);
    }

    #[test]
    fn constants_leave_no_nodes() {
        let tape = Tape::new();
        let a = Var::constant(2.0);
        let b = Var::constant(5.0);
        let c = (a * b + 1.0).sqrt();
        assert!(c.is_constant());
        assert!(tape.is_empty());
    }

    #[test]
    fn multiplying_by_zero_prunes_the_branch() {
        let tape = Tape::new();
        let x = tape.var(1.5);
        let z = x * 0.0;
        assert!(z.is_constant());
        assert_eq!(tape.len(), 1);
    }

    #[test]
    fn reused_variable_accumulates() {
        let tape = Tape::new();
        let x = tape.var(0.7);
        let f = x * x * x;
        let g = tape.gradient(f, &[x]);
        assert!((g[0] - 3.0 * 0.49).abs() < 1e-15);
    }

    #[test]
    fn division_and_acos() {
        let tape = Tape::new();
        let x = tape.var(0.3);
        let y = tape.var(0.6);
        let f = (x / y).acos();
        let g = tape.gradient(f, &[x, y]);
        let r: f64 = 0.5;
        let d = -1.0 / (1.0 - r * r).sqrt();
        assert!((g[0] - d / 0.6).abs() < 1e-14);
        assert!((g[1] - d * (-0.3 / 0.36)).abs() < 1e-14);
    }
}
