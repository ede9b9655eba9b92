use crate::data::LabelRule;

/// One row of a case-study table. `None` cells print as `/`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRow {
    pub group: String,
    pub label: String,
    pub values: Vec<Option<f64>>,
    pub outcome: Option<f64>,
}

impl CaseRow {
    /// A feature vector with its label value under `rule`.
    pub fn point(group: &str, label: &str, x: &[f64], rule: &LabelRule) -> Self {
        Self { group: group.into(), label: label.into(), values: x.iter().map(|&v| Some(v)).collect(), outcome: Some(rule.value(x)) }
    }

    /// An action vector; non-actionable features print as `/`.
    pub fn action(group: &str, label: &str, theta: &[f64], actionable: &[usize]) -> Self {
        let values = theta.iter().enumerate().map(|(j, &v)| actionable.contains(&j).then_some(v)).collect();
        Self { group: group.into(), label: label.into(), values, outcome: None }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "/".into())
}

/// Aligned text table: group, row label, one column per feature, then the label value.
pub fn case_report(names: &[String], value_name: &str, rows: &[CaseRow]) -> String {
    let mut table: Vec<Vec<String>> = Vec::with_capacity(rows.len() + 1);
    let mut header = vec![String::new(), String::new()];
    header.extend(names.iter().cloned());
    header.push(value_name.into());
    table.push(header);
    for r in rows {
        let mut line = vec![r.group.clone(), r.label.clone()];
        line.extend(r.values.iter().map(|&v| cell(v)));
        line.push(cell(r.outcome));
        table.push(line);
    }
    let cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols).map(|c| table.iter().filter_map(|l| l.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for line in &table {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(c, s)| if c < 2 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loan_factual_row_and_slashes() {
        let names: Vec<String> = ["G", "A", "E", "L", "D", "I", "S"].map(String::from).to_vec();
        let x = [0.0, 7.7065, -0.0707, 6.8254, 7.9987, -1.8513, -3.5468];
        let rows = [
            CaseRow::point("", "x", &x, &LabelRule::Loan),
            CaseRow::action("ADCAR", "theta", &[0.0, 0.0, 0.0, 1.0, -2.0, 7.0, 6.0], &[3, 4, 5, 6]),
        ];
        let t = case_report(&names, "Y", &rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with("0.0164"), "{t}");
        let theta: Vec<&str> = lines[2].split_whitespace().collect();
        assert_eq!(theta, ["ADCAR", "theta", "/", "/", "/", "1.0000", "-2.0000", "7.0000", "6.0000", "/"]);
    }
}
