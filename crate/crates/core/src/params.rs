//! Named parameter trees.
//!
//! Parameter structs are generic over their slot type so one definition
//! serves storage (`Tensor<S>`), tape handles (`Var`), gradients and
//! optimizer moments (`Vec<S>`).

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Declares a parameter struct with `map`, `visit` and `visit_mut`, which walk
/// fields in declaration order with dotted names.
macro_rules! param_struct {
    (
        $(#[$meta:meta])*
        pub struct $name:ident<T> {
            $($leaf:ident),* $(,)?
            $(; $($child:ident : $cty:ident),* $(,)?)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<T> {
            $(pub $leaf: T,)*
            $($(pub $child: $cty<T>,)*)?
        }

        impl<T> $name<T> {
            pub fn map<U, F: FnMut(&str, &T) -> U>(&self, prefix: &str, f: &mut F) -> $name<U> {
                $name {
                    $($leaf: f(&$crate::params::join(prefix, stringify!($leaf)), &self.$leaf),)*
                    $($($child: self.$child.map(&$crate::params::join(prefix, stringify!($child)), f),)*)?
                }
            }

            pub fn visit<F: FnMut(&str, &T)>(&self, prefix: &str, f: &mut F) {
                $(f(&$crate::params::join(prefix, stringify!($leaf)), &self.$leaf);)*
                $($(self.$child.visit(&$crate::params::join(prefix, stringify!($child)), f);)*)?
            }

            pub fn visit_mut<F: FnMut(&str, &mut T)>(&mut self, prefix: &str, f: &mut F) {
                $(f(&$crate::params::join(prefix, stringify!($leaf)), &mut self.$leaf);)*
                $($(self.$child.visit_mut(&$crate::params::join(prefix, stringify!($child)), f);)*)?
            }
        }
    };
}

pub(crate) use param_struct;

/// Glorot-uniform `[fan_in x fan_out]` weight matrix.
pub(crate) fn glorot<S: Scalar, R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor<S> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("valid range");
    let data = (0..fan_in * fan_out).map(|_| S::c(dist.sample(rng))).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("glorot shape")
}

pub(crate) fn normal<S: Scalar, R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Tensor<S> {
    let dist = Normal::new(0.0, std).expect("valid std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| S::c(dist.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data).expect("normal shape")
}
