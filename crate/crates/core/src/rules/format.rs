use super::ast::RuleAst;
use crate::schema::ConceptSchema;

/// Renders an AST in the rule language. Compound operands are always
/// parenthesized so that parsing the output yields the same tree.
pub fn format_ast(ast: &RuleAst, schema: &ConceptSchema) -> String {
    let mut out = String::new();
    write_node(ast, schema, &mut out);
    out
}

fn write_node(ast: &RuleAst, schema: &ConceptSchema, out: &mut String) {
    match ast {
        RuleAst::Literal(i, set) => {
            let c = schema.concept(*i);
            let names: Vec<&str> = set.iter().map(|&o| c.values[o - 1].as_str()).collect();
            if names.len() == 1 {
                out.push_str(&format!("{} = {}", c.name, names[0]));
            } else {
                out.push_str(&format!("{} IN {{{}}}", c.name, names.join(", ")));
            }
        }
        RuleAst::ConstTrue => out.push_str("TRUE"),
        RuleAst::ConstFalse => out.push_str("FALSE"),
        RuleAst::Not(a) => {
            out.push_str("NOT ");
            write_operand(a, schema, out);
        }
        RuleAst::And(xs) => write_joined(xs, " AND ", schema, out),
        RuleAst::Or(xs) => write_joined(xs, " OR ", schema, out),
        RuleAst::Implies(a, b) => write_joined([a.as_ref(), b.as_ref()], " -> ", schema, out),
        RuleAst::Iff(a, b) => write_joined([a.as_ref(), b.as_ref()], " <-> ", schema, out),
    }
}

fn write_joined<'a>(
    items: impl IntoIterator<Item = &'a RuleAst>,
    sep: &str,
    schema: &ConceptSchema,
    out: &mut String,
) {
    for (k, item) in items.into_iter().enumerate() {
        if k > 0 {
            out.push_str(sep);
        }
        write_operand(item, schema, out);
    }
}

fn write_operand(ast: &RuleAst, schema: &ConceptSchema, out: &mut String) {
    if matches!(ast, RuleAst::ConstTrue | RuleAst::ConstFalse) {
        write_node(ast, schema, out);
    } else {
        out.push('(');
        write_node(ast, schema, out);
        out.push(')');
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_rules;
    use crate::schema::fixtures::woodpecker;

    #[test]
    fn literal_and_implication() {
        let w = woodpecker();
        assert_eq!(format_ast(&RuleAst::lit(1, [1]), &w), "head = red");
        assert_eq!(
            format_ast(&RuleAst::implies(RuleAst::lit(1, [1]), RuleAst::lit(0, [1])), &w),
            "(head = red) -> (bird = rhw)"
        );
        assert_eq!(
            format_ast(&RuleAst::lit(2, [2, 3]), &w),
            "bill IN {dagger, allpurpose}"
        );
    }

    #[test]
    fn nested_same_operator_survives_round_trip() {
        let w = woodpecker();
        let ast = RuleAst::Or(vec![
            RuleAst::Or(vec![RuleAst::lit(0, [1]), RuleAst::lit(1, [2])]),
            RuleAst::not(RuleAst::not(RuleAst::lit(2, [3]))),
            RuleAst::iff(RuleAst::ConstTrue, RuleAst::iff(RuleAst::lit(0, [2]), RuleAst::ConstFalse)),
        ]);
        let text = format_ast(&ast, &w);
        assert_eq!(parse_rules(&text, &w).unwrap(), ast);
    }
}
