package demo;

import java.util.List;

public class Parser extends BaseParser implements Closeable {
    private final List<String> tokens;
    private int pos = 0;

    public Parser(List<String> tokens) {
        this.tokens = tokens;
    }

    public Node parseExpr() {
        Node left = parseTerm();
        while (peek("+")) {
            advance();
            left = new Node(left, parseTerm());
        }
        return left;
    }

    Node parseTerm() {
        if (peek("(")) {
            advance();
            Node inner = parseExpr();
            advance();
            return inner;
        }
        return new Node(advance());
    }

    private boolean peek(String s) {
        return pos < tokens.size() && tokens.get(pos).equals(s);
    }

    private String advance() {
        return tokens.get(pos++);
    }

    @Override
    public void close() {
        Runnable r = new Runnable() {
            @Override
            public void run() {
                reset();
            }
        };
        r.run();
    }

    void reset() { pos = 0; }
}
