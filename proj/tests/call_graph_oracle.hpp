#pragma once

#include <set>
#include <string>
#include <utility>

// Hand-enumerated call edges of the fixture corpora under tests/fixtures/corpus.
namespace call_graph_oracle {

using EdgeSet = std::set<std::pair<std::string, std::string>>;

inline const EdgeSet& solidity() {
    static const EdgeSet e = {{"SoulZap.zap", "ZapBase._transferIn"},
                              {"SoulZap.zap", "SoulZap._zap"},
                              {"SoulZap._zap", "SoulZap.pairTokensAndValue"},
                              {"SoulZap._zap", "SoulZap._addLiquidity"}};
    return e;
}

inline const EdgeSet& java() {
    static const EdgeSet e = {{"Parser.parseExpr", "Parser.parseTerm"},
                              {"Parser.parseExpr", "Parser.peek"},
                              {"Parser.parseExpr", "Parser.advance"},
                              {"Parser.parseTerm", "Parser.peek"},
                              {"Parser.parseTerm", "Parser.advance"},
                              {"Parser.parseTerm", "Parser.parseExpr"},
                              {"Parser.close", "Parser.close$run"},
                              {"Parser.close", "Parser.reset"},
                              {"Parser.close$run", "Parser.reset"}};
    return e;
}

inline const EdgeSet& cpp() {
    static const EdgeSet e = {{"net::Buffer::append", "net::grow"},
                              {"net::Buffer::append", "net::Buffer::size"},
                              {"net::grow", "net::log_growth"},
                              {"net::log_growth", "net::grow"},
                              {"parse_packet", "net::Buffer::append"},
                              {"parse_packet", "net::Buffer::size"},
                              {"parse_packet", "validate"},
                              {"parse_packet$lambda1", "validate"}};
    return e;
}

}  // namespace call_graph_oracle
