//! ANSI SQL text for plans, and the inverse for a small read-only subset.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDate;

use crate::ingest::{FieldType, Value};
use crate::schema::DataSchema;

use super::plan::{
    AggFn, Aggregate, Direction, Filter, FilterOp, GroupBy, GroupPost, OrderBy, OrderKey, Projection, QueryPlan,
};
use super::validate::{validate_plan, PlanError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SqlError {
    #[error("plan cannot be expressed as a single statement; equivalent statements:\n{0}")]
    UnrepresentablePlan(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("unsupported SQL: {0}")]
    Unsupported(String),
    #[error("SQL syntax error: {0}")]
    Syntax(String),
}

/// A statement with `?` placeholders and the values bound to them, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSql {
    pub sql: String,
    pub params: Vec<Value>,
}

fn quote(ident: &str) -> String {
    format!("\"{}\"", ident.replace('"', "\"\""))
}

fn is_text(schema: &DataSchema, field: &str) -> bool {
    schema.field_type(field) == Some(FieldType::Text)
}

/// Column expression; composites become a concatenation of their parts.
fn column_expr(schema: &DataSchema, field: &str) -> String {
    match schema.composite(field) {
        Some(c) => {
            let sep = format!(" || '{}' || ", c.join_separator.replace('\'', "''"));
            let parts: Vec<String> = c.parts.iter().map(|p| quote(p)).collect();
            format!("({})", parts.join(&sep))
        }
        None => quote(field),
    }
}

fn like_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, '%' | '_' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn render_filter(schema: &DataSchema, f: &Filter, params: &mut Vec<Value>) -> String {
    let text = is_text(schema, &f.field);
    let col = column_expr(schema, &f.field);
    let lhs = if text { format!("LOWER({col})") } else { col.clone() };
    let rhs = if text { "LOWER(?)" } else { "?" };
    let cmp = |sym: &str, params: &mut Vec<Value>| {
        params.push(f.values[0].clone());
        format!("{lhs} {sym} {rhs}")
    };
    let like = |pattern: String, params: &mut Vec<Value>| {
        params.push(Value::Text(pattern));
        format!("LOWER({col}) LIKE LOWER(?) ESCAPE '\\'")
    };
    match f.op {
        FilterOp::Eq => cmp("=", params),
        FilterOp::Ne => cmp("<>", params),
        FilterOp::Lt | FilterOp::Before => cmp("<", params),
        FilterOp::Le => cmp("<=", params),
        FilterOp::Gt | FilterOp::After => cmp(">", params),
        FilterOp::Ge => cmp(">=", params),
        FilterOp::Between => {
            params.push(f.values[0].clone());
            params.push(f.values[1].clone());
            format!("{lhs} BETWEEN {rhs} AND {rhs}")
        }
        FilterOp::Contains => like(format!("%{}%", like_escape(&f.values[0].to_string())), params),
        FilterOp::StartsWith => like(format!("{}%", like_escape(&f.values[0].to_string())), params),
        FilterOp::EndsWith => like(format!("%{}", like_escape(&f.values[0].to_string())), params),
        FilterOp::NameMatch => match schema.composite(&f.field) {
            Some(c) => {
                let sep = format!(" || '{}' || ", c.join_separator.replace('\'', "''"));
                let mut alts = Vec::new();
                for i in 0..c.parts.len() {
                    for j in i..c.parts.len() {
                        let run: Vec<String> = c.parts[i..=j].iter().map(|p| quote(p)).collect();
                        alts.push(format!("LOWER({}) = LOWER(?)", run.join(&sep)));
                        params.push(f.values[0].clone());
                    }
                }
                format!("({})", alts.join(" OR "))
            }
            None => cmp("=", params),
        },
    }
}

fn agg_sql(func: AggFn, field: Option<&str>) -> String {
    let name = match func {
        AggFn::Count => "COUNT",
        AggFn::Sum => "SUM",
        AggFn::Avg => "AVG",
        AggFn::Min => "MIN",
        AggFn::Max => "MAX",
    };
    match (func, field) {
        (AggFn::Count, _) | (_, None) => "COUNT(*)".to_string(),
        (_, Some(f)) => format!("{name}({})", quote(f)),
    }
}

fn where_clause(schema: &DataSchema, filters: &[Filter], extra: Option<String>, params: &mut Vec<Value>) -> String {
    let mut conds: Vec<String> = filters.iter().map(|f| render_filter(schema, f, params)).collect();
    conds.extend(extra);
    if conds.is_empty() {
        String::new()
    } else {
        format!(" WHERE {}", conds.join(" AND "))
    }
}

fn nulls_last(expr: &str, dir: Direction) -> String {
    let d = if dir == Direction::Asc { "ASC" } else { "DESC" };
    format!("CASE WHEN {expr} IS NULL THEN 1 ELSE 0 END, {expr} {d}")
}

/// Renders a plan as one ANSI SELECT over `table`.
pub fn render_sql(plan: &QueryPlan, schema: &DataSchema, table: &str) -> Result<RenderedSql, SqlError> {
    let plan = validate_plan(plan, schema)?;
    let from = quote(table);
    let mut params = Vec::new();
    if let Some(g) = &plan.group_by {
        let col = quote(&g.field);
        let not_null = Some(format!("{col} IS NOT NULL"));
        // Text groups ignore case; the engine names each after its first
        // spelling, which plain SQL cannot express, so the smallest one is shown.
        let (key, shown) = if is_text(schema, &g.field) {
            (format!("LOWER({col})"), format!("MIN({col}) AS {col}"))
        } else {
            (col.clone(), col.clone())
        };
        match &g.post {
            GroupPost::CompareCounts(vals) => {
                let stmts: Vec<String> = vals
                    .iter()
                    .map(|v| {
                        let mut p = Vec::new();
                        let mut fs = plan.filters.clone();
                        fs.push(Filter {
                            field: g.field.clone(),
                            op: FilterOp::Eq,
                            values: alloc::vec![v.clone()],
                        });
                        let w = where_clause(schema, &fs, None, &mut p);
                        let shown: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
                        format!("SELECT COUNT(*) FROM {from}{w}; -- [{}]", shown.join(", "))
                    })
                    .collect();
                return Err(SqlError::UnrepresentablePlan(stmts.join("\n")));
            }
            GroupPost::ArgmaxCount => {
                let w = where_clause(schema, &plan.filters, not_null, &mut params);
                let mut sql = format!(
                    "SELECT {shown}, COUNT(*) AS \"count\" FROM {from}{w} GROUP BY {key} ORDER BY COUNT(*) DESC, {key} ASC"
                );
                if let Some(k) = plan.limit {
                    sql.push_str(&format!(" LIMIT {k}"));
                }
                return Ok(RenderedSql { sql, params });
            }
            GroupPost::PerGroupAggregate { func, field } => {
                let agg = agg_sql(*func, Some(field));
                let w = where_clause(schema, &plan.filters, not_null, &mut params);
                let mut sql = format!("SELECT {shown}, {agg} FROM {from}{w} GROUP BY {key}");
                match &plan.order_by {
                    Some(OrderBy {
                        key: OrderKey::Aggregate,
                        direction,
                    }) => sql.push_str(&format!(" ORDER BY {}, {key} ASC", nulls_last(&agg, *direction))),
                    _ => sql.push_str(&format!(" ORDER BY {key} ASC")),
                }
                if let Some(k) = plan.limit {
                    sql.push_str(&format!(" LIMIT {k}"));
                }
                return Ok(RenderedSql { sql, params });
            }
        }
    }
    let select = match (&plan.projection, &plan.aggregate) {
        (Projection::RowCount, _) => "COUNT(*)".to_string(),
        (Projection::ColumnCount, _) => {
            return Ok(RenderedSql {
                sql: "SELECT ?".to_string(),
                params: alloc::vec![Value::Int(schema.fields.len() as i64)],
            })
        }
        (Projection::DistinctCount(f), _) => {
            if is_text(schema, f) {
                format!("COUNT(DISTINCT LOWER({}))", quote(f))
            } else {
                format!("COUNT(DISTINCT {})", quote(f))
            }
        }
        (_, Some(a)) => agg_sql(a.func, a.field.as_deref()),
        (Projection::All, None) => "*".to_string(),
        (Projection::Fields(fs), None) => fs
            .iter()
            .map(|f| match schema.composite(f) {
                Some(_) => format!("{} AS {}", column_expr(schema, f), quote(f)),
                None => quote(f),
            })
            .collect::<Vec<_>>()
            .join(", "),
    };
    let w = where_clause(schema, &plan.filters, None, &mut params);
    let mut sql = format!("SELECT {select} FROM {from}{w}");
    if let Some(OrderBy {
        key: OrderKey::Field(f),
        direction,
    }) = &plan.order_by
    {
        let expr = if is_text(schema, f) {
            format!("LOWER({})", column_expr(schema, f))
        } else {
            column_expr(schema, f)
        };
        sql.push_str(&format!(" ORDER BY {}", nulls_last(&expr, *direction)));
    }
    if let Some(k) = plan.limit {
        sql.push_str(&format!(" LIMIT {k}"));
    }
    Ok(RenderedSql { sql, params })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Quoted(String),
    Str(String),
    Num(String),
    Sym(&'static str),
}

fn lex(sql: &str) -> Result<Vec<Tok>, SqlError> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            return Err(SqlError::Unsupported("comments".into()));
        }
        if c == '\'' || c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(SqlError::Syntax("unterminated quote".into())),
                    Some(&q) if q == c => {
                        if chars.get(i + 1) == Some(&c) {
                            s.push(c);
                            i += 2;
                        } else {
                            i += 1;
                            break;
                        }
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(if c == '\'' { Tok::Str(s) } else { Tok::Quoted(s) });
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Num(chars[start..i].iter().collect()));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let sym: &'static str = match two.as_str() {
            "<=" => "<=",
            ">=" => ">=",
            "<>" => "<>",
            "!=" => "<>",
            _ => match c {
                '*' => "*",
                '(' => "(",
                ')' => ")",
                ',' => ",",
                '=' => "=",
                '<' => "<",
                '>' => ">",
                ';' => ";",
                _ => return Err(SqlError::Syntax(format!("unexpected character `{c}`"))),
            },
        };
        i += if matches!(two.as_str(), "<=" | ">=" | "<>" | "!=") { 2 } else { 1 };
        out.push(Tok::Sym(sym));
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    schema: &'a DataSchema,
}

const FORBIDDEN: &[&str] = &[
    "insert", "update", "delete", "drop", "alter", "create", "attach", "pragma", "join", "union", "having",
    "into", "replace", "exec", "grant", "with",
];

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(SqlError::Syntax(format!("expected {kw}")))
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), SqlError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(SqlError::Syntax(format!("expected `{s}`")))
        }
    }

    fn column(&mut self) -> Result<String, SqlError> {
        let name = match self.next() {
            Some(Tok::Ident(s)) | Some(Tok::Quoted(s)) => s,
            other => return Err(SqlError::Syntax(format!("expected a column, found {other:?}"))),
        };
        if let Some(f) = self.schema.field(&name) {
            return Ok(f.canonical_name.clone());
        }
        if let Some(c) = self.schema.composite(&name) {
            return Ok(c.name.clone());
        }
        Err(SqlError::Plan(PlanError::UnknownField(name)))
    }

    fn literal(&mut self) -> Result<Value, SqlError> {
        match self.next() {
            Some(Tok::Num(n)) => {
                if let Ok(i) = n.parse::<i64>() {
                    Ok(Value::Int(i))
                } else {
                    n.parse::<f64>()
                        .map(Value::Float)
                        .map_err(|_| SqlError::Syntax(format!("bad number `{n}`")))
                }
            }
            Some(Tok::Str(s)) => Ok(Value::Text(s)),
            Some(Tok::Ident(k)) if k.eq_ignore_ascii_case("true") => Ok(Value::Bool(true)),
            Some(Tok::Ident(k)) if k.eq_ignore_ascii_case("false") => Ok(Value::Bool(false)),
            Some(Tok::Ident(k)) if k.eq_ignore_ascii_case("date") => match self.next() {
                Some(Tok::Str(s)) => NaiveDate::parse_from_str(&s, "%Y-%m-%d")
                    .map(Value::Date)
                    .map_err(|_| SqlError::Syntax(format!("bad date `{s}`"))),
                _ => Err(SqlError::Syntax("expected a date string".into())),
            },
            other => Err(SqlError::Syntax(format!("expected a literal, found {other:?}"))),
        }
    }

    fn agg_fn(&self) -> Option<AggFn> {
        let Some(Tok::Ident(s)) = self.peek() else { return None };
        let f = match s.to_ascii_lowercase().as_str() {
            "count" => AggFn::Count,
            "sum" => AggFn::Sum,
            "avg" => AggFn::Avg,
            "min" => AggFn::Min,
            "max" => AggFn::Max,
            _ => return None,
        };
        matches!(self.toks.get(self.pos + 1), Some(Tok::Sym("("))).then_some(f)
    }

    /// `COUNT(*)`, `COUNT(DISTINCT x)`, `AVG(x)`...
    fn aggregate(&mut self) -> Result<SelectItem, SqlError> {
        let func = self.agg_fn().expect("checked by caller");
        self.pos += 1;
        self.expect_sym("(")?;
        let item = if func == AggFn::Count && self.eat_sym("*") {
            SelectItem::CountStar
        } else if func == AggFn::Count && self.eat_kw("distinct") {
            SelectItem::CountDistinct(self.column()?)
        } else {
            SelectItem::Agg(func, self.column()?)
        };
        self.expect_sym(")")?;
        if self.eat_kw("as") {
            self.next();
        }
        Ok(item)
    }

    fn select_item(&mut self) -> Result<SelectItem, SqlError> {
        if self.eat_sym("*") {
            return Ok(SelectItem::Star);
        }
        if self.agg_fn().is_some() {
            return self.aggregate();
        }
        let c = self.column()?;
        if self.eat_kw("as") {
            self.next();
        }
        Ok(SelectItem::Column(c))
    }

    fn condition(&mut self) -> Result<Filter, SqlError> {
        let field = self.column()?;
        if self.eat_kw("between") {
            let lo = self.literal()?;
            self.expect_kw("and")?;
            let hi = self.literal()?;
            return Ok(Filter {
                field,
                op: FilterOp::Between,
                values: alloc::vec![lo, hi],
            });
        }
        if self.eat_kw("like") {
            let Value::Text(p) = self.literal()? else {
                return Err(SqlError::Syntax("LIKE needs a string".into()));
            };
            let starts = p.starts_with('%');
            let ends = p.ends_with('%') && p.len() > 1;
            let inner = p.trim_start_matches('%').trim_end_matches('%').to_string();
            if inner.contains(['%', '_']) {
                return Err(SqlError::Unsupported("LIKE pattern with inner wildcards".into()));
            }
            let op = match (starts, ends) {
                (true, true) => FilterOp::Contains,
                (false, true) => FilterOp::StartsWith,
                (true, false) => FilterOp::EndsWith,
                (false, false) => FilterOp::Eq,
            };
            return Ok(Filter {
                field,
                op,
                values: alloc::vec![Value::Text(inner)],
            });
        }
        let op = match self.next() {
            Some(Tok::Sym("=")) => FilterOp::Eq,
            Some(Tok::Sym("<>")) => FilterOp::Ne,
            Some(Tok::Sym("<")) => FilterOp::Lt,
            Some(Tok::Sym("<=")) => FilterOp::Le,
            Some(Tok::Sym(">")) => FilterOp::Gt,
            Some(Tok::Sym(">=")) => FilterOp::Ge,
            other => return Err(SqlError::Unsupported(format!("condition operator {other:?}"))),
        };
        let value = self.literal()?;
        let temporal = self.schema.field_type(&field).is_some_and(FieldType::is_temporal);
        let op = match (op, temporal) {
            (FilterOp::Lt, true) => FilterOp::Before,
            (FilterOp::Gt, true) => FilterOp::After,
            (o, _) => o,
        };
        Ok(Filter {
            field,
            op,
            values: alloc::vec![value],
        })
    }
}

enum SelectItem {
    Star,
    Column(String),
    CountStar,
    CountDistinct(String),
    Agg(AggFn, String),
}

/// Parses a single read-only SELECT over one table into a plan. Anything
/// outside the supported subset is rejected rather than approximated.
pub fn parse_sql(sql: &str, schema: &DataSchema) -> Result<QueryPlan, SqlError> {
    let toks = lex(sql)?;
    for t in &toks {
        if let Tok::Ident(s) = t {
            if FORBIDDEN.iter().any(|k| s.eq_ignore_ascii_case(k)) {
                return Err(SqlError::Unsupported(format!("keyword {}", s.to_ascii_uppercase())));
            }
        }
    }
    let mut p = Parser { toks, pos: 0, schema };
    p.expect_kw("select")?;
    if p.is_kw("distinct") {
        return Err(SqlError::Unsupported("SELECT DISTINCT".into()));
    }
    let mut items = alloc::vec![p.select_item()?];
    while p.eat_sym(",") {
        items.push(p.select_item()?);
    }
    p.expect_kw("from")?;
    match p.next() {
        Some(Tok::Ident(_)) | Some(Tok::Quoted(_)) => {}
        _ => return Err(SqlError::Syntax("expected a table name".into())),
    }
    if p.eat_sym(",") || p.eat_sym("(") {
        return Err(SqlError::Unsupported("more than one table".into()));
    }
    let mut filters = Vec::new();
    if p.eat_kw("where") {
        filters.push(p.condition()?);
        while p.eat_kw("and") {
            filters.push(p.condition()?);
        }
        if p.is_kw("or") || p.is_kw("not") {
            return Err(SqlError::Unsupported("only AND-joined conditions are supported".into()));
        }
    }
    let mut group = None;
    if p.eat_kw("group") {
        p.expect_kw("by")?;
        group = Some(p.column()?);
    }
    let mut order: Option<(Option<String>, Direction)> = None;
    if p.eat_kw("order") {
        p.expect_kw("by")?;
        let key = if p.agg_fn().is_some() {
            p.aggregate()?;
            None
        } else if matches!(p.peek(), Some(Tok::Num(_))) {
            p.next();
            None
        } else {
            Some(p.column()?)
        };
        let dir = if p.eat_kw("desc") {
            Direction::Desc
        } else {
            p.eat_kw("asc");
            Direction::Asc
        };
        order = Some((key, dir));
        // Secondary keys only refine ties and are dropped.
        while p.eat_sym(",") {
            if p.agg_fn().is_some() {
                p.aggregate()?;
            } else {
                p.next();
            }
            let _ = p.eat_kw("asc") || p.eat_kw("desc");
        }
    }
    let mut limit = None;
    if p.eat_kw("limit") {
        match p.next() {
            Some(Tok::Num(n)) => limit = Some(n.parse::<usize>().map_err(|_| SqlError::Syntax("bad LIMIT".into()))?),
            _ => return Err(SqlError::Syntax("bad LIMIT".into())),
        }
    }
    p.eat_sym(";");
    if p.pos < p.toks.len() {
        return Err(SqlError::Unsupported("trailing input".into()));
    }

    let mut plan = QueryPlan::new(Projection::All);
    plan.filters = filters;
    plan.limit = limit;
    let aggs: Vec<&SelectItem> = items
        .iter()
        .filter(|i| !matches!(i, SelectItem::Star | SelectItem::Column(_)))
        .collect();
    if let Some(g) = group {
        let post = match aggs.as_slice() {
            [] | [SelectItem::CountStar] => GroupPost::ArgmaxCount,
            [SelectItem::Agg(func, f)] => {
                plan.order_by = order.as_ref().map(|(_, d)| OrderBy {
                    key: OrderKey::Aggregate,
                    direction: *d,
                });
                GroupPost::PerGroupAggregate {
                    func: *func,
                    field: f.clone(),
                }
            }
            _ => return Err(SqlError::Unsupported("grouped select list".into())),
        };
        plan.group_by = Some(GroupBy { field: g, post });
    } else {
        match (aggs.as_slice(), items.len()) {
            ([], _) => {
                if !items.iter().any(|i| matches!(i, SelectItem::Star)) {
                    plan.projection = Projection::Fields(
                        items
                            .iter()
                            .filter_map(|i| match i {
                                SelectItem::Column(c) => Some(c.clone()),
                                _ => None,
                            })
                            .collect(),
                    );
                }
                if let Some((key, d)) = order {
                    let key = key.ok_or_else(|| SqlError::Unsupported("positional ORDER BY".into()))?;
                    plan.order_by = Some(OrderBy {
                        key: OrderKey::Field(key),
                        direction: d,
                    });
                }
            }
            ([SelectItem::CountStar], 1) => plan.projection = Projection::RowCount,
            ([SelectItem::CountDistinct(f)], 1) => plan.projection = Projection::DistinctCount(f.clone()),
            ([SelectItem::Agg(func, f)], 1) => {
                plan.aggregate = Some(Aggregate {
                    func: *func,
                    field: Some(f.clone()),
                })
            }
            _ => return Err(SqlError::Unsupported("mixed select list".into())),
        }
    }
    Ok(validate_plan(&plan, schema)?)
}
