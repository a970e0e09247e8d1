//! Mask layouts. Token order along the encoder timeline is
//! `[near-past | short-term | anticipation]`; near-past and short-term tokens
//! are time-stamped, anticipation tokens are not.

use crate::error::Result;
use crate::mask::{AttentionMask, MaskKind};
use crate::partition::PartitionConfig;

/// Encoder self-attention: time-stamped `p` sees time-stamped `p' <= p + delta`,
/// never an anticipation token; anticipation tokens see everything.
pub fn build_encoder_self_mask(cfg: &PartitionConfig) -> Result<AttentionMask> {
    let n = cfg.encoder_len();
    let stamped = cfg.near_past + cfg.short;
    let delta = cfg.delta;
    AttentionMask::from_fn(n, n, MaskKind::Encoder { delta }, |i, j| {
        if i >= stamped {
            true
        } else {
            j < stamped && j <= i + delta
        }
    })
}

/// Encoder cross-attention onto `[compressed long | short | anticipation]` keys.
/// Long columns are always visible; the short and anticipation key blocks follow
/// the self-attention rule on the shared timeline.
pub fn build_encoder_cross_mask(cfg: &PartitionConfig, long_queries: usize) -> Result<AttentionMask> {
    let rows = cfg.encoder_len();
    let stamped = cfg.near_past + cfg.short;
    let cols = long_queries + cfg.sa_len();
    let delta = cfg.delta;
    AttentionMask::from_fn(rows, cols, MaskKind::Encoder { delta }, |i, j| {
        if j < long_queries || i >= stamped {
            return true;
        }
        let k = j - long_queries;
        k < cfg.short && cfg.near_past + k <= i + delta
    })
}

/// Refinement self-attention among `[short | anticipation]` rows: the encoder
/// rule restricted to that block.
pub fn build_refinement_self_mask(cfg: &PartitionConfig) -> Result<AttentionMask> {
    let n = cfg.sa_len();
    let delta = cfg.delta;
    AttentionMask::from_fn(n, n, MaskKind::Refinement { delta }, |i, j| {
        i >= cfg.short || (j < cfg.short && j <= i + delta)
    })
}

/// Refinement cross-attention onto
/// `[compressed long | M_SA short | M_SA anticipation | near-future]`.
pub fn build_refinement_cross_mask(cfg: &PartitionConfig, long_queries: usize) -> Result<AttentionMask> {
    let rows = cfg.sa_len();
    let cols = long_queries + cfg.sa_len() + cfg.near_future;
    let delta = cfg.delta;
    AttentionMask::from_fn(rows, cols, MaskKind::Refinement { delta }, |i, j| {
        if i >= cfg.short || j < long_queries || j >= long_queries + cfg.sa_len() {
            return true;
        }
        let k = j - long_queries;
        k < cfg.short && k <= i + delta
    })
}

/// Refinement cross mask with every short and anticipation column open, which
/// lets early frames read later ones through the anticipation tokens.
pub fn build_leaky_refinement_cross_mask(cfg: &PartitionConfig, long_queries: usize) -> AttentionMask {
    AttentionMask::full(cfg.sa_len(), long_queries + cfg.sa_len() + cfg.near_future)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(near_past: usize, short: usize, anticipation: usize, delta: usize) -> PartitionConfig {
        PartitionConfig {
            long: 64,
            near_past,
            short,
            anticipation,
            delta,
            ..PartitionConfig::default()
        }
    }

    #[test]
    fn pure_causal_when_no_extras() {
        let m = build_encoder_self_mask(&cfg(0, 5, 0, 0)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m.allowed(i, j), j <= i);
            }
        }
    }

    #[test]
    fn six_by_six_enumeration() {
        // T_c=2, T_s=3, T_a=1: rows 0..2 near-past, 2..5 short, 5 anticipation.
        let m = build_encoder_self_mask(&cfg(2, 3, 1, 0)).unwrap();
        let want: [[u8; 6]; 6] = [
            [1, 0, 0, 0, 0, 0],
            [1, 1, 0, 0, 0, 0],
            [1, 1, 1, 0, 0, 0],
            [1, 1, 1, 1, 0, 0],
            [1, 1, 1, 1, 1, 0],
            [1, 1, 1, 1, 1, 1],
        ];
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(m.allowed(i, j), want[i][j] == 1, "({i},{j})");
            }
        }
        // short-term row 0 is absolute row 2
        assert_eq!(m.row(2), &[true, true, true, false, false, false]);
        assert!(m.row(5).iter().all(|&a| a));
        assert!((0..5).all(|i| !m.allowed(i, 5)));
    }

    #[test]
    fn latency_one() {
        let m = build_encoder_self_mask(&cfg(0, 4, 0, 1)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.allowed(i, j), j <= i + 1);
            }
        }
    }

    #[test]
    fn refinement_single_short_row() {
        let c = PartitionConfig {
            short: 1,
            anticipation: 0,
            near_future: 3,
            ..cfg(0, 1, 0, 0)
        };
        let m = build_refinement_cross_mask(&c, 2).unwrap();
        assert_eq!(m.rows(), 1);
        assert!(m.row(0).iter().all(|&a| a));
    }

    #[test]
    fn refinement_four_by_ten() {
        let c = PartitionConfig {
            near_future: 4,
            ..cfg(0, 3, 1, 0)
        };
        let m = build_refinement_cross_mask(&c, 2).unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 10));
        // cols: 0-1 long, 2-4 short, 5 anticipation, 6-9 future
        let want: [[u8; 10]; 4] = [
            [1, 1, 1, 0, 0, 0, 1, 1, 1, 1],
            [1, 1, 1, 1, 0, 0, 1, 1, 1, 1],
            [1, 1, 1, 1, 1, 0, 1, 1, 1, 1],
            [1, 1, 1, 1, 1, 1, 1, 1, 1, 1],
        ];
        for i in 0..4 {
            for j in 0..10 {
                assert_eq!(m.allowed(i, j), want[i][j] == 1, "({i},{j})");
            }
        }
        let leaky = build_leaky_refinement_cross_mask(&c, 2);
        assert!(leaky.is_all_true());
        assert_eq!((leaky.rows(), leaky.cols()), (4, 10));
    }

    #[test]
    fn short_block_lower_triangular_at_zero_delta() {
        for (tc, ts, ta) in [(0, 4, 2), (3, 5, 1), (2, 2, 0)] {
            let c = cfg(tc, ts, ta, 0);
            let m = build_encoder_self_mask(&c).unwrap();
            for i in 0..ts {
                for j in 0..ts {
                    assert_eq!(m.allowed(tc + i, tc + j), j <= i);
                }
            }
            let x = build_encoder_cross_mask(&c, 3).unwrap();
            x.validate().unwrap();
            build_refinement_self_mask(&c).unwrap().validate().unwrap();
        }
    }
}
