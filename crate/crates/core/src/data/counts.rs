use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::record::{Domain, MemeSample, Role, Split};
use crate::error::{Error, Result};

/// Sample counts per (role, split, domain).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CountTable {
    cells: BTreeMap<(Role, Split, Domain), usize>,
}

/// A cell of the published dataset summary. Test counts are not broken down by domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpectedCell {
    pub role: Role,
    pub split: Split,
    pub domain: Option<Domain>,
    pub count: usize,
}

pub fn validate_counts(samples: &[MemeSample]) -> CountTable {
    let mut table = CountTable::default();
    for s in samples {
        *table.cells.entry((s.role, s.split, s.domain)).or_default() += 1;
    }
    table
}

impl CountTable {
    pub fn get(&self, role: Role, split: Split, domain: Domain) -> usize {
        self.cells.get(&(role, split, domain)).copied().unwrap_or(0)
    }

    /// Sum over every cell matching the given filters (`None` matches anything).
    pub fn sum(&self, role: Option<Role>, split: Option<Split>, domain: Option<Domain>) -> usize {
        self.cells
            .iter()
            .filter(|((r, s, d), _)| {
                role.map_or(true, |x| x == *r)
                    && split.map_or(true, |x| x == *s)
                    && domain.map_or(true, |x| x == *d)
            })
            .map(|(_, c)| c)
            .sum()
    }

    pub fn total(&self) -> usize {
        self.sum(None, None, None)
    }

    pub fn nonzero_cells(&self) -> usize {
        self.cells.values().filter(|&&c| c > 0).count()
    }

    /// Checks the table against the ExHVV summary and lists every differing cell.
    pub fn expect_exhvv(&self) -> Result<()> {
        let mut diffs = Vec::new();
        for cell in exhvv_expected() {
            let got = self.sum(Some(cell.role), Some(cell.split), cell.domain);
            if got != cell.count {
                let domain = cell.domain.map_or("*", Domain::as_str);
                diffs.push(format!(
                    "{}/{}/{}: expected {}, got {}",
                    cell.role,
                    cell.split.as_str(),
                    domain,
                    cell.count,
                    got
                ));
            }
        }
        for split in [Split::Train, Split::Val] {
            let stray = self.sum(None, Some(split), Some(Domain::Unspecified));
            if stray != 0 {
                diffs.push(format!(
                    "*/{}/unspecified: expected 0, got {stray}",
                    split.as_str()
                ));
            }
        }
        for role in Role::ALL {
            let want = exhvv_role_total(role);
            let got = self.sum(Some(role), None, None);
            if got != want {
                diffs.push(format!("{role}/total: expected {want}, got {got}"));
            }
        }
        if self.total() != EXHVV_TOTAL {
            diffs.push(format!(
                "total: expected {EXHVV_TOTAL}, got {}",
                self.total()
            ));
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::CountMismatch(diffs.join("; ")))
        }
    }

    /// Aligned text rendering in the layout of the published summary.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>9} {:>9} {:>9} {:>9} {:>6} {:>6}",
            "role", "pol/train", "pol/val", "cov/train", "cov/val", "test", "total"
        );
        let row = |role: Option<Role>| {
            [
                self.sum(role, Some(Split::Train), Some(Domain::UsPolitics)),
                self.sum(role, Some(Split::Val), Some(Domain::UsPolitics)),
                self.sum(role, Some(Split::Train), Some(Domain::Covid19)),
                self.sum(role, Some(Split::Val), Some(Domain::Covid19)),
                self.sum(role, Some(Split::Test), None),
                self.sum(role, None, None),
            ]
        };
        for (name, role) in [
            ("villain", Some(Role::Villain)),
            ("victim", Some(Role::Victim)),
            ("hero", Some(Role::Hero)),
            ("total", None),
        ] {
            let c = row(role);
            let _ = writeln!(
                out,
                "{:<8} {:>9} {:>9} {:>9} {:>9} {:>6} {:>6}",
                name, c[0], c[1], c[2], c[3], c[4], c[5]
            );
        }
        let unspecified = self.sum(None, Some(Split::Train), Some(Domain::Unspecified))
            + self.sum(None, Some(Split::Val), Some(Domain::Unspecified));
        if unspecified > 0 {
            let _ = writeln!(out, "train/val samples without domain: {unspecified}");
        }
        out
    }
}

pub const EXHVV_TOTAL: usize = 4680;

fn exhvv_role_total(role: Role) -> usize {
    match role {
        Role::Villain => 3004,
        Role::Victim => 1110,
        Role::Hero => 566,
    }
}

/// Published ExHVV cell counts.
pub fn exhvv_expected() -> Vec<ExpectedCell> {
    use Domain::*;
    use Role::*;
    use Split::*;
    let rows = [
        (Villain, [1708, 217, 654, 78, 347]),
        (Victim, [531, 71, 357, 47, 104]),
        (Hero, [276, 35, 185, 20, 50]),
    ];
    let mut out = Vec::new();
    for (role, c) in rows {
        let cells = [
            (Train, Some(UsPolitics), c[0]),
            (Val, Some(UsPolitics), c[1]),
            (Train, Some(Covid19), c[2]),
            (Val, Some(Covid19), c[3]),
            (Test, None, c[4]),
        ];
        for (split, domain, count) in cells {
            out.push(ExpectedCell {
                role,
                split,
                domain,
                count,
            });
        }
    }
    out
}
