//! Two-by-two matching-pennies payoff tables used in laboratory studies of
//! risk-averse play.

use super::BenchmarkId;
use crate::error::{invalid, Result};
use crate::matrix::{MatrixGameSpec, RationalitySpec};
use crate::risk::RiskSpec;

/// `(player 1, player 2)` payoffs for cells UL, UR, DL, DR.
type Table = [(f64, f64); 4];

const GHP4: Table = [(200.0, 160.0), (160.0, 10.0), (370.0, 200.0), (10.0, 370.0)];

const SC: [Table; 12] = [
    [(10.0, 10.0), (0.0, 18.0), (9.0, 9.0), (10.0, 8.0)],
    [(9.0, 4.0), (0.0, 13.0), (6.0, 7.0), (8.0, 5.0)],
    [(8.0, 6.0), (0.0, 14.0), (7.0, 7.0), (10.0, 4.0)],
    [(7.0, 4.0), (0.0, 11.0), (5.0, 6.0), (9.0, 2.0)],
    [(7.0, 2.0), (0.0, 9.0), (4.0, 5.0), (8.0, 1.0)],
    [(7.0, 1.0), (1.0, 7.0), (3.0, 5.0), (8.0, 0.0)],
    [(10.0, 12.0), (4.0, 22.0), (9.0, 9.0), (14.0, 8.0)],
    [(9.0, 7.0), (3.0, 16.0), (6.0, 7.0), (11.0, 5.0)],
    [(8.0, 9.0), (3.0, 17.0), (7.0, 7.0), (13.0, 4.0)],
    [(7.0, 6.0), (2.0, 13.0), (5.0, 6.0), (11.0, 2.0)],
    [(7.0, 4.0), (2.0, 11.0), (4.0, 5.0), (10.0, 1.0)],
    [(7.0, 3.0), (3.0, 9.0), (3.0, 5.0), (10.0, 0.0)],
];

/// Payoff matrices `(R_1, R_2)` indexed `[row][column]`, with player 1
/// choosing the row (U, D) and player 2 the column (L, R).
pub fn payoff_table(id: &BenchmarkId) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let table = match *id {
        BenchmarkId::Ghp(4) => &GHP4,
        BenchmarkId::Sc(k) if (1..=12).contains(&k) => &SC[k - 1],
        ref other => return invalid(format!("{other} is not a matching-pennies table")),
    };
    let r1 = vec![vec![table[0].0, table[1].0], vec![table[2].0, table[3].0]];
    let r2 = vec![vec![table[0].1, table[1].1], vec![table[2].1, table[3].1]];
    Ok((r1, r2))
}

/// The table `id` as a game with the caller's risk and rationality settings.
pub fn matching_pennies(
    id: &BenchmarkId,
    risk: [RiskSpec; 2],
    rationality: [RationalitySpec; 2],
) -> Result<MatrixGameSpec> {
    let (r1, r2) = payoff_table(id)?;
    MatrixGameSpec::two_player(&r1, &r2, risk, rationality)
}

/// Every table in a fixed order: GHP game 4 first, then SC games 1 to 12.
pub fn all_tables() -> Vec<BenchmarkId> {
    std::iter::once(BenchmarkId::Ghp(4))
        .chain((1..=12).map(BenchmarkId::Sc))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ghp_entries() {
        let (r1, r2) = payoff_table(&BenchmarkId::Ghp(4)).unwrap();
        assert_eq!(r1, vec![vec![200.0, 160.0], vec![370.0, 10.0]]);
        assert_eq!(r2, vec![vec![160.0, 10.0], vec![200.0, 370.0]]);
    }

    #[test]
    fn sc_first_and_last() {
        let (r1, r2) = payoff_table(&BenchmarkId::Sc(1)).unwrap();
        assert_eq!(r1, vec![vec![10.0, 0.0], vec![9.0, 10.0]]);
        assert_eq!(r2, vec![vec![10.0, 18.0], vec![9.0, 8.0]]);
        let (r1, r2) = payoff_table(&BenchmarkId::Sc(12)).unwrap();
        assert_eq!(r1, vec![vec![7.0, 3.0], vec![3.0, 10.0]]);
        assert_eq!(r2, vec![vec![3.0, 9.0], vec![5.0, 0.0]]);
    }

    #[test]
    fn unknown_tables_rejected() {
        assert!(payoff_table(&BenchmarkId::Sc(13)).is_err());
        assert!(payoff_table(&BenchmarkId::Ghp(3)).is_err());
        assert!(payoff_table(&BenchmarkId::Sc(0)).is_err());
    }
}
