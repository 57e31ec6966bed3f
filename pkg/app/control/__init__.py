# Policy extraction and closed-loop simulation
